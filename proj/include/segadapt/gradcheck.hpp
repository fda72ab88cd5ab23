#pragma once

// Central-difference gradient verification. Runs entirely on the double
// instantiation of the tensor engine; analytic gradients from one reverse
// sweep are compared against (f(x+h) - f(x-h)) / 2h per checked entry.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "segadapt/errors.hpp"
#include "segadapt/rng.hpp"
#include "segadapt/tensor.hpp"

namespace sga {

struct GradCheckOptions {
    double step = 1e-3;
    // 0 checks every entry; otherwise a deterministic random subset per tensor
    // (keeps deep-composite checks at seconds instead of hours).
    int max_entries_per_tensor = 0;
    uint64_t entry_seed = 0x9c0ffee;
    // Relative-error denominator floor. Keeps near-zero gradients from
    // inflating the error while still catching entirely missing gradients.
    double denom_floor = 1e-3;
};

// f must rebuild its graph from the given leaves on every call and be
// deterministic given fixed rng streams. Returns the worst relative error
// over all checked entries.
inline double gradcheck(const std::function<TensorT<double>()>& f,
                        const std::vector<TensorT<double>>& params,
                        const GradCheckOptions& opt = {}) {
    for (auto p : params) p.zero_grad();
    TensorT<double> out = f();
    if (!std::isfinite(out.item()))
        throw StateError("gradcheck: non-finite function value " + std::to_string(out.item()));
    out.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params)
        analytic.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.size(), 0.0));

    double worst = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        TensorT<double> p = params[pi];
        int64_t count = p.size();
        std::vector<int64_t> indices;
        if (opt.max_entries_per_tensor > 0 && count > opt.max_entries_per_tensor) {
            Rng rng(derive_seed(opt.entry_seed, static_cast<uint64_t>(pi)));
            for (int k = 0; k < opt.max_entries_per_tensor; ++k)
                indices.push_back(rng.uniform_int(static_cast<int>(count)));
        } else {
            indices.resize(count);
            for (int64_t i = 0; i < count; ++i) indices[i] = i;
        }
        for (int64_t idx : indices) {
            double saved = p.data()[idx];
            p.data()[idx] = saved + opt.step;
            double f1 = f().item();
            p.data()[idx] = saved - opt.step;
            double f2 = f().item();
            p.data()[idx] = saved;
            if (!std::isfinite(f1) || !std::isfinite(f2))
                throw StateError("gradcheck: non-finite value while perturbing entry " +
                                 std::to_string(idx) + " of tensor " + std::to_string(pi));
            double numeric = (f1 - f2) / (2.0 * opt.step);
            double a = analytic[pi][idx];
            double denom = std::max(std::abs(a) + std::abs(numeric), opt.denom_floor);
            double rel = std::abs(a - numeric) / denom;
            if (rel > worst) worst = rel;
        }
    }
    return worst;
}

}  // namespace sga
