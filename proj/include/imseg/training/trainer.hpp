#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "imseg/core/rng.hpp"
#include "imseg/data/generator.hpp"
#include "imseg/data/metrics.hpp"
#include "imseg/model.hpp"
#include "imseg/training/adamw.hpp"
#include "imseg/training/loss.hpp"

namespace imseg {

struct TrainConfig {
    double lr_adapters = 5e-5;
    double lr_decoder = 1e-3;
    double weight_decay = 1e-2;
    std::size_t epochs = 200;
    std::size_t batch = 4;
    std::uint64_t seed = 0;
    SupervisionWeights weights_start{1.0, 0.5};
    SupervisionWeights weights_end{0.5, 1.0};
    // Pixels drawn per image and step; 0 trains on the full grid.
    std::size_t points_per_image = 1024;
};

/// Dropout stream for final predictions. Fixed so that evaluation and
/// single-image inference select identical refinement sets.
inline Rng inference_rng() { return Rng(0x1f3e5c7a9bULL, 0xe7a1); }

struct EpochMetrics {
    std::size_t epoch = 0;
    std::string split;
    double loss = 0.0;
    double dice = 0.0;
};

/// `epoch,split,loss,dice`
inline std::string to_log_line(const EpochMetrics& m) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << m.epoch << ',' << m.split << ',' << std::setprecision(9) << m.loss << ',' << m.dice;
    return os.str();
}

struct TrainResult {
    std::vector<EpochMetrics> log;
    std::size_t best_epoch = 0; // 0: initialization
    double best_val_dice = -1.0;
    bool aborted = false;
    std::string abort_reason;
};

/// Image tensor and per-pixel labels prepared once per sample.
template <class T>
struct PreparedSample {
    const Sample* sample = nullptr;
    Tensor<T> image;
};

template <class T>
struct Evaluation {
    double loss = 0.0;
    double dice = 0.0;
    std::vector<DiceReport> per_sample;
    std::vector<std::vector<std::uint8_t>> predictions;

    /// Per-class Dice averaged over samples.
    std::vector<double> per_class() const {
        std::vector<double> out;
        for (const auto& r : per_sample) {
            out.resize(r.per_class.size(), 0.0);
            for (std::size_t c = 0; c < r.per_class.size(); ++c)
                out[c] += r.per_class[c] / static_cast<double>(per_sample.size());
        }
        return out;
    }
};

/// Full-grid prediction scored against the stored mask, or, with a nonzero
/// `out_res`, on an out_res×out_res grid against ground truth rasterized
/// from the sample's analytic shape.
template <class T>
Evaluation<T> evaluate(const Segmenter<T>& model, const std::vector<Sample>& samples, std::size_t out_res = 0) {
    Evaluation<T> ev;
    if (samples.empty())
        return ev;
    if (out_res != 0)
        validate_resolution(out_res);
    const auto classes = model.config().decoder.n_classes;
    for (const auto& s : samples) {
        const GrayImage truth = out_res == 0 ? s.mask : rasterize_mask(s.shape, out_res);
        const auto r = model.predict(image_tensor<T>(s.image), s.bbox, truth.height, truth.width, inference_rng());
        auto labels = r.labels();
        auto rep = dice_metric(labels, truth.pixels, static_cast<int>(classes));
        {
            NoGradGuard guard;
            ev.loss += static_cast<double>(seg_loss(one_hot<T>(truth.pixels, classes), r.merged).item());
        }
        ev.dice += rep.mean;
        ev.per_sample.push_back(std::move(rep));
        ev.predictions.push_back(std::move(labels));
    }
    ev.loss /= static_cast<double>(samples.size());
    ev.dice /= static_cast<double>(samples.size());
    return ev;
}

template <class T>
struct StepOutput {
    Tensor<T> loss;
    std::vector<std::uint8_t> predicted; // merged arg-max on the drawn points
    std::vector<std::uint8_t> labels;
};

/// Forward pass of one training batch: per image encode, draw points and
/// assemble; one coarse pass over all points; per-image refinement sets
/// from gradient-free MC passes; fine pass on the union; progressive loss.
template <class T>
StepOutput<T> training_step(const Segmenter<T>& model, const std::vector<const PreparedSample<T>*>& batch,
                            std::size_t points_per_image, SupervisionWeights w, Rng& rng) {
    const auto& dcfg = model.config().decoder;
    std::vector<Tensor<T>> feats, encs;
    std::vector<std::uint8_t> labels;
    std::vector<std::size_t> offsets;
    std::size_t total = 0;
    for (const auto* ps : batch) {
        const auto& mask = ps->sample->mask;
        const std::size_t hw = mask.width * mask.height;
        std::vector<std::size_t> pix(hw);
        for (std::size_t i = 0; i < hw; ++i)
            pix[i] = i;
        std::size_t k = hw;
        if (points_per_image > 0 && points_per_image < hw) {
            for (std::size_t i = 0; i < points_per_image; ++i)
                std::swap(pix[i], pix[i + rng.below(hw - i)]);
            k = points_per_image;
        }
        std::vector<T> coords(2 * k);
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t r = pix[i] / mask.width, c = pix[i] % mask.width;
            coords[2 * i] = static_cast<T>(-1.0 + (2.0 * c + 1.0) / static_cast<double>(mask.width));
            coords[2 * i + 1] = static_cast<T>(-1.0 + (2.0 * r + 1.0) / static_cast<double>(mask.height));
            labels.push_back(mask.pixels[pix[i]]);
        }
        const auto enc = model.encode(ps->image, ps->sample->bbox);
        auto pts = model.points(Tensor<T>({k, 2}, std::move(coords)), enc);
        feats.push_back(pts.features);
        encs.push_back(pts.encoded);
        offsets.push_back(total);
        total += k;
    }
    const auto features = feats.size() == 1 ? feats[0] : concat_rows(feats);
    const auto encoded = encs.size() == 1 ? encs[0] : concat_rows(encs);
    const auto coarse = model.coarse(features);

    std::vector<std::size_t> selected;
    for (std::size_t b = 0; b < feats.size(); ++b) {
        const Rng sel_rng = rng.fork(b);
        for (auto i : model.select(feats[b], sel_rng))
            selected.push_back(offsets[b] + i);
    }
    rng.next_u64();
    const auto fine = model.fine(coarse.hidden, encoded, selected);

    const auto classes = dcfg.n_classes;
    const auto target = one_hot<T>(labels, classes);
    std::vector<std::uint8_t> fine_labels;
    for (auto i : selected)
        fine_labels.push_back(labels[i]);
    const auto fine_target = one_hot<T>(fine_labels, classes);

    StepOutput<T> out;
    out.loss = progressive_loss(target, coarse.probs, fine_target, fine, w);
    {
        NoGradGuard guard;
        const auto merged = merge(coarse.probs.detach(), fine.detach(), selected);
        out.predicted.resize(total);
        for (std::size_t i = 0; i < total; ++i) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < classes; ++c)
                if (merged.at(i, c) > merged.at(i, best))
                    best = c;
            out.predicted[i] = static_cast<std::uint8_t>(best);
        }
    }
    out.labels = std::move(labels);
    return out;
}

/// Seeded epoch loop with per-epoch validation. The model ends holding the
/// parameters of the best validation epoch (initialization when no epoch
/// ran). A non-finite loss restores those parameters and stops.
template <class T>
TrainResult train(Segmenter<T>& model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& cfg, const std::function<void(const EpochMetrics&)>& on_metrics = {}) {
    TrainResult result;
    auto best = model.snapshot();
    if (cfg.epochs == 0 || train_set.empty())
        return result;
    if (cfg.batch == 0)
        throw ParameterError("batch size must be positive");

    AdamW<T> opt(model.parameters(), {cfg.lr_adapters, cfg.lr_decoder, cfg.weight_decay});
    std::vector<PreparedSample<T>> prepared;
    for (const auto& s : train_set)
        prepared.push_back({&s, image_tensor<T>(s.image)});
    std::vector<std::size_t> order(prepared.size());
    Rng rng(cfg.seed, 0x7a11);
    const auto classes = static_cast<int>(model.config().decoder.n_classes);

    auto emit = [&](EpochMetrics m) {
        if (on_metrics)
            on_metrics(m);
        result.log.push_back(std::move(m));
    };

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i)
            order[i] = i;
        Rng epoch_rng = rng.fork(epoch);
        shuffle(order, epoch_rng);
        const auto w = progressive_weights(epoch - 1, cfg.epochs, cfg.weights_start, cfg.weights_end);
        double loss_sum = 0.0, dice_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            std::vector<const PreparedSample<T>*> batch;
            for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch); ++i)
                batch.push_back(&prepared[order[i]]);
            auto step = training_step(model, batch, cfg.points_per_image, w, epoch_rng);
            const double loss = static_cast<double>(step.loss.item());
            if (!std::isfinite(loss)) {
                model.restore(best);
                result.aborted = true;
                result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch);
                return result;
            }
            step.loss.backward();
            opt.step();
            opt.zero_grad();
            loss_sum += loss;
            dice_sum += dice_metric(step.predicted, step.labels, classes).mean;
            ++steps;
        }
        emit({epoch, "train", loss_sum / static_cast<double>(steps), dice_sum / static_cast<double>(steps)});
        if (!val_set.empty()) {
            const auto ev = evaluate(model, val_set);
            emit({epoch, "val", ev.loss, ev.dice});
            if (ev.dice > result.best_val_dice) {
                result.best_val_dice = ev.dice;
                result.best_epoch = epoch;
                best = model.snapshot();
            }
        } else {
            result.best_epoch = epoch;
            best = model.snapshot();
        }
    }
    model.restore(best);
    return result;
}

} // namespace imseg
