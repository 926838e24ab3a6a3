#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "imseg/core/errors.hpp"

namespace imseg {

struct DiceReport {
    std::vector<double> per_class; // index k holds class k + 1
    double mean = 0.0;             // foreground-averaged
};

/// Hard Dice per foreground class, 2|P∩G| / (|P| + |G|). A class absent from
/// both prediction and truth scores 1.
inline DiceReport dice_metric(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth,
                              int n_classes) {
    if (pred.size() != truth.size())
        throw DimensionError("dice_metric: " + std::to_string(pred.size()) + " predictions vs " +
                             std::to_string(truth.size()) + " labels");
    if (n_classes < 2)
        throw ParameterError("dice_metric needs at least 2 classes");
    const auto k = static_cast<std::size_t>(n_classes);
    std::vector<std::size_t> inter(k, 0), p(k, 0), g(k, 0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < k)
            ++p[pred[i]];
        if (truth[i] < k)
            ++g[truth[i]];
        if (pred[i] == truth[i] && pred[i] < k)
            ++inter[pred[i]];
    }
    DiceReport r;
    for (std::size_t c = 1; c < k; ++c) {
        const std::size_t denom = p[c] + g[c];
        r.per_class.push_back(denom == 0 ? 1.0 : 2.0 * static_cast<double>(inter[c]) / static_cast<double>(denom));
        r.mean += r.per_class.back();
    }
    r.mean /= static_cast<double>(k - 1);
    return r;
}

} // namespace imseg
