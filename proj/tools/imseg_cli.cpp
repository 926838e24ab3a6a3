#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "imseg/imseg.hpp"

namespace fs = std::filesystem;
using namespace imseg;

namespace {

struct TrainOptions {
    std::string data;
    std::string out;
    std::string log;
    std::string domain;
    std::size_t epochs = 200;
    std::uint64_t seed = 0;
    std::string fa = "amplitude";
    std::size_t lora_rank = 4;
    std::string topk = "0.125";
    std::size_t passes = 8;
    std::size_t points = 1024;
};

struct TopK {
    Sampling sampling = Sampling::top_k;
    double fraction = 0.125;
};

double parse_fraction(const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw ArgumentError("--topk expects off, a fraction in (0, 1] or random:F, got '" + s + "'");
    }
    if (used != s.size())
        throw ArgumentError("--topk expects off, a fraction in (0, 1] or random:F, got '" + s + "'");
    if (!(v > 0.0 && v <= 1.0))
        throw ArgumentError("--topk fraction must lie in (0, 1], got " + s);
    return v;
}

TopK parse_topk(const std::string& s) {
    if (s == "off")
        return {Sampling::off, 0.125};
    if (s.starts_with("random:"))
        return {Sampling::random, parse_fraction(s.substr(7))};
    return {Sampling::top_k, parse_fraction(s)};
}

Domain pick_domain(const fs::path& root, const std::string& requested) {
    if (!requested.empty())
        return domain_from_string(requested);
    const auto found = domains_in(root);
    if (found.empty())
        throw DataError("no domain directory (A or B) under " + root.string());
    return found.front();
}

std::size_t worker_cap(std::size_t requested) {
    std::size_t cap = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("IMSEG_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0)
            cap = std::min(cap, static_cast<std::size_t>(v));
    }
    return std::max<std::size_t>(1, std::min(requested, cap));
}

ModelConfig model_config(const TrainOptions& o, const Sample& first) {
    if (first.image.width != first.image.height)
        throw DataError("training images must be square, got " + std::to_string(first.image.width) + "x" +
                        std::to_string(first.image.height));
    ModelConfig cfg;
    cfg.encoder.image_size = first.image.width;
    cfg.encoder.fa_mode = fa_mode_from_string(o.fa);
    cfg.encoder.lora_rank = o.lora_rank;
    const auto tk = parse_topk(o.topk);
    cfg.decoder.sampling = tk.sampling;
    cfg.decoder.top_k = tk.fraction;
    cfg.decoder.mc_passes = o.passes;
    cfg.decoder.n_classes = static_cast<std::size_t>(first.n_classes);
    cfg.validate();
    return cfg;
}

struct Trained {
    Segmenter<float> model;
    TrainResult result;
    std::vector<Sample> test;
};

Trained run_training(const TrainOptions& o, bool verbose) {
    const fs::path root(o.data);
    const Domain d = pick_domain(root, o.domain);
    auto train_set = load_split(root, d, "train");
    auto val_set = load_split(root, d, "val");
    auto test_set = load_split(root, d, "test");
    const auto cfg = model_config(o, train_set.front());
    Segmenter<float> model(cfg, o.seed);
    TrainConfig tc;
    tc.epochs = o.epochs;
    tc.seed = o.seed;
    tc.points_per_image = o.points;
    auto result = train(model, train_set, val_set, tc, [&](const EpochMetrics& m) {
        if (verbose)
            std::cout << to_log_line(m) << std::endl;
    });
    if (result.aborted)
        std::cerr << "warning: " << result.abort_reason << "; kept best parameters\n";
    return {std::move(model), std::move(result), std::move(test_set)};
}

int cmd_gen_data(const std::string& domain, std::size_t n, std::size_t res, std::uint64_t seed, int classes,
                 const std::string& out, bool force) {
    if (n < 5)
        throw ArgumentError("--n must be >= 5, got " + std::to_string(n));
    validate_resolution(res);
    const fs::path root(out);
    const DomainSpec spec{domain_from_string(domain), classes};
    const fs::path target = root / std::string(1, domain_char(spec.domain));
    if (fs::exists(target) && !fs::is_empty(target)) {
        if (!force)
            throw ArgumentError("output directory " + target.string() + " is not empty (use --force)");
        fs::remove_all(target);
    }
    const auto parts = write_dataset(root, spec, n, res, seed);
    std::cout << "wrote " << n << " samples to " << (root / std::string(1, domain_char(spec.domain))).string() << " ("
              << parts.train.size() << " train, " << parts.val.size() << " val, " << parts.test.size() << " test)\n";
    return 0;
}

int cmd_train(const TrainOptions& o) {
    auto t = run_training(o, true);
    nlohmann::json extra;
    extra["train"] = to_json(TrainConfig{.epochs = o.epochs, .seed = o.seed, .points_per_image = o.points});
    extra["best_epoch"] = t.result.best_epoch;
    extra["best_val_dice"] = t.result.best_val_dice;
    save_checkpoint(o.out, t.model, o.seed, extra);
    const fs::path log = o.log.empty() ? fs::path(o.out + ".metrics.csv") : fs::path(o.log);
    std::ofstream f(log, std::ios::trunc);
    if (!f)
        throw DataError("cannot write " + log.string());
    f << "epoch,split,loss,dice\n";
    for (const auto& m : t.result.log)
        f << to_log_line(m) << '\n';
    std::cout << "checkpoint " << o.out << " (best epoch " << t.result.best_epoch << ", val dice "
              << t.result.best_val_dice << ")\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& domain, std::size_t out_res,
             const std::string& split_name, const std::string& report, const std::string& pred_dir) {
    const auto ck = load_checkpoint(ckpt);
    const auto model = model_from_checkpoint<float>(ck);
    const fs::path root(data);
    const Domain d = pick_domain(root, domain);
    const auto samples = load_split(root, d, split_name);
    const auto size = model.config().encoder.image_size;
    for (const auto& s : samples)
        if (s.image.width != size || s.image.height != size)
            throw DataError("sample " + s.id + " is " + std::to_string(s.image.width) + "x" +
                            std::to_string(s.image.height) + ", model expects " + std::to_string(size) + "x" +
                            std::to_string(size));
    const auto ev = evaluate(model, samples, out_res);
    const std::size_t res = out_res == 0 ? samples.front().mask.width : out_res;
    const auto per_class = ev.per_class();
    std::cout << "dice " << ev.dice << " (" << samples.size() << " samples, domain " << domain_char(d) << ", res "
              << res << ")\n";
    for (std::size_t c = 0; c < per_class.size(); ++c)
        std::cout << "class " << c + 1 << " dice " << per_class[c] << '\n';
    if (!report.empty()) {
        nlohmann::json j;
        j["dice"] = ev.dice;
        j["per_class"] = per_class;
        j["loss"] = ev.loss;
        j["samples"] = samples.size();
        j["domain"] = std::string(1, domain_char(d));
        j["split"] = split_name;
        j["resolution"] = res;
        std::ofstream f(report, std::ios::trunc);
        if (!f)
            throw DataError("cannot write " + report);
        f << j.dump(2) << '\n';
    }
    if (!pred_dir.empty()) {
        fs::create_directories(pred_dir);
        for (std::size_t i = 0; i < samples.size(); ++i)
            write_mask(fs::path(pred_dir) / (samples[i].id + ".pred.pgm"), GrayImage{res, res, ev.predictions[i]});
    }
    return 0;
}

BoundingBox parse_bbox_arg(const std::string& text) {
    std::istringstream in(text);
    in.imbue(std::locale::classic());
    double v[4];
    for (double& x : v)
        if (!(in >> x))
            throw ArgumentError("--bbox expects four numbers \"x0 y0 x1 y1\", got '" + text + "'");
    std::string rest;
    if (in >> rest)
        throw ArgumentError("--bbox expects four numbers \"x0 y0 x1 y1\", got '" + text + "'");
    const BoundingBox b{v[0], v[1], v[2], v[3]};
    try {
        validate_box(b);
    } catch (const PromptError& e) {
        throw ArgumentError(std::string("--bbox: ") + e.what());
    }
    return b;
}

int cmd_infer(const std::string& ckpt, const std::string& image_path, const std::string& bbox_text,
              std::size_t out_res, const std::string& out, const std::string& uncertainty_path) {
    const auto box = parse_bbox_arg(bbox_text);
    if (out_res == 0 || out_res > 4096)
        throw ArgumentError("--out-res must lie in [1, 4096], got " + std::to_string(out_res));
    const auto ck = load_checkpoint(ckpt);
    const auto model = model_from_checkpoint<float>(ck);
    auto img = read_image(image_path);
    const auto size = model.config().encoder.image_size;
    if (img.width != size || img.height != size) {
        std::cerr << "warning: input is " << img.width << "x" << img.height << ", center-fitted to " << size << "x"
                  << size << '\n';
        img = center_fit(img, size, size);
    }
    const auto r = model.predict(image_tensor<float>(img), box, out_res, out_res, inference_rng());
    if (!r.warning.empty())
        std::cerr << "warning: " << r.warning << '\n';
    write_mask(out, GrayImage{out_res, out_res, r.labels()});
    if (!uncertainty_path.empty()) {
        const double peak = *std::max_element(r.uncertainty.begin(), r.uncertainty.end());
        std::vector<std::uint8_t> px(r.uncertainty.size(), 0);
        if (peak > 0.0)
            for (std::size_t i = 0; i < px.size(); ++i)
                px[i] = static_cast<std::uint8_t>(std::lround(255.0 * r.uncertainty[i] / peak));
        write_mask(uncertainty_path, GrayImage{out_res, out_res, std::move(px)});
    }
    std::cout << "wrote " << out << " (" << out_res << "x" << out_res << ", " << r.selected.size()
              << " refined points)\n";
    return 0;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ','))
        if (!item.empty())
            out.push_back(item);
    return out;
}

int cmd_ablate(const TrainOptions& base, const std::string& axis, const std::string& values,
               const std::string& seeds, const std::string& report, std::size_t jobs) {
    if (axis != "lora" && axis != "fa" && axis != "topk")
        throw ArgumentError("--axis must be lora, fa or topk, got '" + axis + "'");
    const auto vals = split_list(values);
    const auto seed_list = split_list(seeds);
    if (vals.empty() || seed_list.empty())
        throw ArgumentError("--values and --seeds need at least one entry each");

    struct Run {
        std::string value;
        std::uint64_t seed = 0;
        TrainOptions opt;
    };
    std::vector<Run> runs;
    for (const auto& v : vals)
        for (const auto& s : seed_list) {
            Run r{v, 0, base};
            try {
                r.seed = std::stoull(s);
            } catch (const std::exception&) {
                throw ArgumentError("--seeds entry '" + s + "' is not an integer");
            }
            r.opt.seed = r.seed;
            if (axis == "lora") {
                try {
                    r.opt.lora_rank = std::stoul(v);
                } catch (const std::exception&) {
                    throw ArgumentError("lora value '" + v + "' is not an integer");
                }
            } else if (axis == "fa") {
                fa_mode_from_string(v);
                r.opt.fa = v;
            } else {
                parse_topk(v);
                r.opt.topk = v;
            }
            runs.push_back(std::move(r));
        }

    std::vector<double> dice(runs.size(), 0.0);
    auto work = [&](std::size_t i) {
        auto t = run_training(runs[i].opt, false);
        dice[i] = evaluate(t.model, t.test).dice;
    };
    const std::size_t workers = worker_cap(jobs);
    for (std::size_t start = 0; start < runs.size(); start += workers) {
        std::vector<std::future<void>> pending;
        for (std::size_t i = start; i < std::min(runs.size(), start + workers); ++i)
            pending.push_back(std::async(workers == 1 ? std::launch::deferred : std::launch::async, work, i));
        for (auto& f : pending)
            f.get();
    }

    std::ostringstream csv;
    csv.imbue(std::locale::classic());
    csv << "axis,value,seed,dice\n";
    for (std::size_t i = 0; i < runs.size(); ++i)
        csv << axis << ',' << runs[i].value << ',' << runs[i].seed << ',' << std::setprecision(9) << dice[i] << '\n';
    std::cout << csv.str();
    if (!report.empty()) {
        std::ofstream f(report, std::ios::trunc | std::ios::binary);
        if (!f)
            throw DataError("cannot write " + report);
        f << csv.str();
    }
    return 0;
}

void add_train_flags(CLI::App* cmd, TrainOptions& o) {
    cmd->add_option("--data", o.data, "Dataset root")->required();
    cmd->add_option("--domain", o.domain, "Domain to train on (default: first present)");
    cmd->add_option("--epochs", o.epochs, "Training epochs");
    cmd->add_option("--fa", o.fa, "Frequency adapter mode: amplitude|phase|off");
    cmd->add_option("--lora-rank", o.lora_rank, "LoRA rank");
    cmd->add_option("--topk", o.topk, "Refinement: fraction in (0, 1], off, or random:F");
    cmd->add_option("--T", o.passes, "MC-dropout passes");
    cmd->add_option("--points", o.points, "Pixels drawn per image and step (0: all)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Promptable implicit segmentation: data, training, evaluation and inference"};
    app.require_subcommand(1);

    std::string domain = "A", out;
    std::size_t n = 60, res = 64;
    std::uint64_t seed = 0;
    int classes = 2;
    bool force = false;
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    gen->add_option("--domain", domain, "A or B");
    gen->add_option("--n", n, "Number of samples");
    gen->add_option("--res", res, "Resolution (power of two in [32, 256])");
    gen->add_option("--seed", seed, "Seed");
    gen->add_option("--classes", classes, "Class count including background (2 or 4)");
    gen->add_option("--out", out, "Output root")->required();
    gen->add_flag("--force", force, "Replace a non-empty output directory");

    TrainOptions topt;
    auto* trn = app.add_subcommand("train", "Train and write the best-validation checkpoint");
    add_train_flags(trn, topt);
    trn->add_option("--out", topt.out, "Checkpoint path")->required();
    trn->add_option("--seed", topt.seed, "Seed");
    trn->add_option("--log", topt.log, "Metrics CSV (default: <out>.metrics.csv)");

    std::string ckpt, data, eval_domain, split_name = "test", report, pred_dir;
    std::size_t out_res = 0;
    auto* evl = app.add_subcommand("eval", "Dice of a checkpoint on one split");
    evl->add_option("--ckpt", ckpt, "Checkpoint")->required();
    evl->add_option("--data", data, "Dataset root")->required();
    evl->add_option("--domain", eval_domain, "Domain (default: first present)");
    evl->add_option("--split", split_name, "train|val|test")->check(CLI::IsMember({"train", "val", "test"}));
    evl->add_option("--out-res", out_res, "Decode and score at this resolution");
    evl->add_option("--report", report, "JSON report path");
    evl->add_option("--save-pred", pred_dir, "Directory for predicted masks");

    std::string image, bbox, mask_out, unc_out;
    std::size_t infer_res = 64;
    auto* inf = app.add_subcommand("infer", "Segment one image");
    inf->add_option("--ckpt", ckpt, "Checkpoint")->required();
    inf->add_option("--image", image, "Input PPM")->required();
    inf->add_option("--bbox", bbox, "\"x0 y0 x1 y1\" in [0, 1]")->required();
    inf->add_option("--out-res", infer_res, "Output resolution");
    inf->add_option("--out", mask_out, "Output mask PGM")->required();
    inf->add_option("--uncertainty", unc_out, "Uncertainty PGM");

    TrainOptions aopt;
    std::string axis, values, seeds = "0,1,2", csv;
    std::size_t jobs = 1;
    auto* abl = app.add_subcommand("ablate", "Train one model per (value, seed) and report test Dice");
    add_train_flags(abl, aopt);
    abl->add_option("--axis", axis, "lora|fa|topk")->required();
    abl->add_option("--values", values, "Comma-separated values")->required();
    abl->add_option("--seeds", seeds, "Comma-separated seeds");
    abl->add_option("--report", csv, "CSV path");
    abl->add_option("--jobs", jobs, "Concurrent trainings (capped by IMSEG_THREADS)");

    try {
        app.parse(argc, argv);
        if (*gen)
            return cmd_gen_data(domain, n, res, seed, classes, out, force);
        if (*trn)
            return cmd_train(topt);
        if (*evl)
            return cmd_eval(ckpt, data, eval_domain, out_res, split_name, report, pred_dir);
        if (*inf)
            return cmd_infer(ckpt, image, bbox, infer_res, mask_out, unc_out);
        if (*abl)
            return cmd_ablate(aopt, axis, values, seeds, csv, jobs);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: argument: " << e.what() << '\n';
        return 2;
    } catch (const ArgumentError& e) {
        std::cerr << "error: argument: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
