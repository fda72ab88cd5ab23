#pragma once

// Confusion-matrix accounting and mean intersection-over-union.

#include <cstdint>
#include <vector>

#include "segadapt/dataset.hpp"

namespace sga {

// Rows index ground truth, columns index prediction.
struct ConfusionMatrix {
    int classes = 0;
    std::vector<int64_t> counts;

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int L) : classes(L), counts(static_cast<size_t>(L) * L, 0) {}

    int64_t& at(int gt, int pred) { return counts[static_cast<size_t>(gt) * classes + pred]; }
    int64_t at(int gt, int pred) const { return counts[static_cast<size_t>(gt) * classes + pred]; }

    void accumulate(const std::vector<uint8_t>& pred, const LabelMap& gt);
    void merge(const ConfusionMatrix& other);
    int64_t total() const;
};

struct IouResult {
    std::vector<double> per_class;  // NaN-free; check `defined`
    std::vector<bool> defined;      // false when the class has zero union
    double mean = 0.0;
};

// Classes absent from both prediction and ground truth are excluded from the
// mean. Throws when nothing was evaluated at all.
IouResult miou(const ConfusionMatrix& cm);

}  // namespace sga
