#pragma once

#include <nlohmann/json.hpp>

#include "imseg/model.hpp"
#include "imseg/training/trainer.hpp"

namespace imseg {

inline Sampling sampling_from_string(const std::string& s) {
    if (s == "topk")
        return Sampling::top_k;
    if (s == "random")
        return Sampling::random;
    if (s == "off")
        return Sampling::off;
    throw FormatError("unknown sampling mode '" + s + "'");
}

inline nlohmann::json to_json(const EncoderConfig& c) {
    return {{"image_size", c.image_size}, {"patch_size", c.patch_size},       {"embed_dim", c.embed_dim},
            {"n_blocks", c.n_blocks},     {"n_heads", c.n_heads},             {"lora_rank", c.lora_rank},
            {"fa_hidden", c.fa_hidden},   {"fa_mode", to_string(c.fa_mode)},  {"mlp_ratio", c.mlp_ratio},
            {"prompt_dim", c.prompt_dim}, {"prompt_levels", c.prompt_levels}};
}

inline nlohmann::json to_json(const DecoderConfig& c) {
    return {{"levels", c.levels},       {"coarse_dims", c.coarse_dims}, {"fine_dims", c.fine_dims},
            {"n_classes", c.n_classes}, {"dropout_p", c.dropout_p},     {"mc_passes", c.mc_passes},
            {"top_k", c.top_k},         {"sampling", to_string(c.sampling)}};
}

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"lr_adapters", c.lr_adapters},
            {"lr_decoder", c.lr_decoder},
            {"weight_decay", c.weight_decay},
            {"epochs", c.epochs},
            {"batch", c.batch},
            {"seed", c.seed},
            {"weights_start", {c.weights_start.coarse, c.weights_start.fine}},
            {"weights_end", {c.weights_end.coarse, c.weights_end.fine}},
            {"points_per_image", c.points_per_image}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.image_size = j.at("image_size");
    c.patch_size = j.at("patch_size");
    c.embed_dim = j.at("embed_dim");
    c.n_blocks = j.at("n_blocks");
    c.n_heads = j.at("n_heads");
    c.lora_rank = j.at("lora_rank");
    c.fa_hidden = j.at("fa_hidden");
    c.fa_mode = fa_mode_from_string(j.at("fa_mode").get<std::string>());
    c.mlp_ratio = j.at("mlp_ratio");
    c.prompt_dim = j.at("prompt_dim");
    c.prompt_levels = j.at("prompt_levels");
    return c;
}

inline DecoderConfig decoder_config_from_json(const nlohmann::json& j) {
    DecoderConfig c;
    c.levels = j.at("levels");
    c.coarse_dims = j.at("coarse_dims").get<std::vector<std::size_t>>();
    c.fine_dims = j.at("fine_dims").get<std::vector<std::size_t>>();
    c.n_classes = j.at("n_classes");
    c.dropout_p = j.at("dropout_p");
    c.mc_passes = j.at("mc_passes");
    c.top_k = j.at("top_k");
    c.sampling = sampling_from_string(j.at("sampling").get<std::string>());
    return c;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.lr_adapters = j.at("lr_adapters");
    c.lr_decoder = j.at("lr_decoder");
    c.weight_decay = j.at("weight_decay");
    c.epochs = j.at("epochs");
    c.batch = j.at("batch");
    c.seed = j.at("seed");
    c.weights_start = {j.at("weights_start")[0], j.at("weights_start")[1]};
    c.weights_end = {j.at("weights_end")[0], j.at("weights_end")[1]};
    c.points_per_image = j.at("points_per_image");
    return c;
}

} // namespace imseg
