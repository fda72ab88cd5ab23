#include "segadapt/metrics.hpp"

#include "segadapt/errors.hpp"

namespace sga {

void ConfusionMatrix::accumulate(const std::vector<uint8_t>& pred, const LabelMap& gt) {
    if (static_cast<int64_t>(pred.size()) != static_cast<int64_t>(gt.h) * gt.w)
        throw DimensionError("confusion accumulate: prediction has " + std::to_string(pred.size()) +
                             " pixels, ground truth " + std::to_string(gt.h * gt.w));
    for (size_t i = 0; i < pred.size(); ++i) {
        int p = pred[i], g = gt.ids[i];
        if (p >= classes || g >= classes)
            throw DimensionError("confusion accumulate: label out of range for " +
                                 std::to_string(classes) + " classes");
        ++at(g, p);
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.classes != classes)
        throw DimensionError("confusion merge: class count mismatch");
    for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

int64_t ConfusionMatrix::total() const {
    int64_t t = 0;
    for (int64_t c : counts) t += c;
    return t;
}

IouResult miou(const ConfusionMatrix& cm) {
    IouResult r;
    r.per_class.assign(cm.classes, 0.0);
    r.defined.assign(cm.classes, false);
    double sum = 0.0;
    int defined = 0;
    for (int c = 0; c < cm.classes; ++c) {
        int64_t row = 0, col = 0;
        for (int k = 0; k < cm.classes; ++k) {
            row += cm.at(c, k);
            col += cm.at(k, c);
        }
        int64_t inter = cm.at(c, c);
        int64_t uni = row + col - inter;
        if (uni == 0) continue;  // class absent from both pred and gt
        r.per_class[c] = static_cast<double>(inter) / static_cast<double>(uni);
        r.defined[c] = true;
        sum += r.per_class[c];
        ++defined;
    }
    if (defined == 0) throw StateError("miou: no class has a nonzero union (nothing evaluated)");
    r.mean = sum / defined;
    return r;
}

}  // namespace sga
