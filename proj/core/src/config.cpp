#include "suseg/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace suseg {

using nlohmann::json;

void ExperimentConfig::validate() const {
    if (folds < 2) throw ConfigError("folds must be >= 2");
    if (scale_settings.empty()) throw ConfigError("at least one scale setting required");
    std::set<std::pair<int, int>> seen;
    for (const auto& s : scale_settings) {
        s.validate();
        if (!seen.insert({s.v, s.p}).second) throw ConfigError("duplicate scale setting");
    }
    if (patches_per_volume_per_epoch < 1) throw ConfigError("patches_per_volume must be >= 1");
    if (prediction_stride_div < 1) throw ConfigError("stride divisor must be >= 1");
    if (isnet_train.minibatch < 1 || aggregator_train.minibatch < 1)
        throw ConfigError("minibatch must be >= 1");
    if (isnet_train.epochs < 0 || aggregator_train.epochs < 0) throw ConfigError("negative epochs");
    isnet_config(scale_settings.front()).validate();
    aggregator_config().validate();
}

ISNetConfig ExperimentConfig::isnet_config(const ScaleSetting& s) const {
    ISNetConfig c;
    c.p = s.p;
    c.levels = isnet_levels;
    c.base_channels = isnet_base_channels;
    c.dilation_rates = dilation_rates;
    c.use_multi_encoder = use_multi_encoder;
    c.use_deep_supervision = use_deep_supervision;
    c.init_seed = seed ^ (static_cast<uint64_t>(s.v) << 20) ^ static_cast<uint64_t>(s.p);
    return c;
}

AggregatorConfig ExperimentConfig::aggregator_config() const {
    AggregatorConfig c;
    c.in_channels = static_cast<int>(scale_settings.size());
    c.levels = aggregator_levels;
    c.base_channels = aggregator_base_channels;
    c.threshold = threshold;
    c.init_seed = seed ^ 0x9e3779b97f4a7c15ull;
    return c;
}

std::vector<ScaleSetting> paper_scale_settings() {
    return {{256, 32}, {256, 64}, {224, 32}, {224, 64}, {192, 32}, {192, 64},
            {160, 32}, {160, 64}, {128, 32}, {128, 64}, {96, 32}};
}

ExperimentConfig default_config(const std::string& profile) {
    ExperimentConfig cfg;
    if (profile == "paper") {
        cfg.scale_settings = paper_scale_settings();
        cfg.folds = 3;
    } else if (profile == "desk") {
        cfg.scale_settings = {{192, 32}, {128, 32}, {96, 16}};
        cfg.isnet_base_channels = 8;
        cfg.isnet_train = {8, 1e-3f, 8};
        cfg.aggregator_train = {4, 1e-3f, 5};
        cfg.aggregator_base_channels = 8;
    } else {
        throw ConfigError("unknown profile: " + profile);
    }
    return cfg;
}

namespace {

std::vector<ScaleSetting> parseScales(const std::string& s) {
    std::vector<ScaleSetting> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        auto x = tok.find('x');
        if (x == std::string::npos) throw ConfigError("bad scale setting (expect VxP): " + tok);
        out.push_back({std::stoi(tok.substr(0, x)), std::stoi(tok.substr(x + 1))});
    }
    if (out.empty()) throw ConfigError("empty scale list");
    return out;
}

std::vector<int> parseIntList(const json& j) {
    if (j.is_string()) {
        std::vector<int> out;
        std::stringstream ss(j.get<std::string>());
        std::string tok;
        while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
        return out;
    }
    return j.get<std::vector<int>>();
}

void applyKey(ExperimentConfig& cfg, const std::string& key, const json& v) {
    if (key == "profile")
        cfg = default_config(v.get<std::string>());
    else if (key == "scales")
        cfg.scale_settings = v.is_string() ? parseScales(v.get<std::string>()) : [&] {
            std::vector<ScaleSetting> out;
            for (const auto& e : v) out.push_back({e.at("v"), e.at("p")});
            return out;
        }();
    else if (key == "folds")
        cfg.folds = v.is_string() ? std::stoi(v.get<std::string>()) : v.get<int>();
    else if (key == "seed")
        cfg.seed = v.is_string() ? std::stoull(v.get<std::string>()) : v.get<uint64_t>();
    else if (key == "patches_per_volume")
        cfg.patches_per_volume_per_epoch = v.is_string() ? std::stoi(v.get<std::string>()) : v.get<int>();
    else if (key == "stride_div")
        cfg.prediction_stride_div = v.is_string() ? std::stoi(v.get<std::string>()) : v.get<int>();
    else if (key == "threshold")
        cfg.threshold = v.is_string() ? std::stof(v.get<std::string>()) : v.get<float>();
    else if (key == "isnet.minibatch")
        cfg.isnet_train.minibatch = v.is_string() ? std::stoi(v.get<std::string>()) : v.get<int>();
    else if (key == "isnet.lr")
        cfg.isnet_train.lr = v.is_string() ? std::stof(v.get<std::string>()) : v.get<float>();
    else if (key == "isnet.epochs")
        cfg.isnet_train.epochs = v.is_string() ? std::stoi(v.get<std::string>()) : v.get<int>();
    else if (key == "isnet.levels")
        cfg.isnet_levels = v.is_string() ? std::stoi(v.get<std::string>()) : v.get<int>();
    else if (key == "isnet.base_channels")
        cfg.isnet_base_channels = v.is_string() ? std::stoi(v.get<std::string>()) : v.get<int>();
    else if (key == "isnet.dilations")
        cfg.dilation_rates = v.is_string() ? parseIntList(v) : v.get<std::vector<int>>();
    else if (key == "isnet.use_me")
        cfg.use_multi_encoder = v.is_string() ? v.get<std::string>() == "true" : v.get<bool>();
    else if (key == "isnet.use_ds")
        cfg.use_deep_supervision = v.is_string() ? v.get<std::string>() == "true" : v.get<bool>();
    else if (key == "aggregator.minibatch")
        cfg.aggregator_train.minibatch = v.is_string() ? std::stoi(v.get<std::string>()) : v.get<int>();
    else if (key == "aggregator.lr")
        cfg.aggregator_train.lr = v.is_string() ? std::stof(v.get<std::string>()) : v.get<float>();
    else if (key == "aggregator.epochs")
        cfg.aggregator_train.epochs = v.is_string() ? std::stoi(v.get<std::string>()) : v.get<int>();
    else if (key == "aggregator.levels")
        cfg.aggregator_levels = v.is_string() ? std::stoi(v.get<std::string>()) : v.get<int>();
    else if (key == "aggregator.base_channels")
        cfg.aggregator_base_channels = v.is_string() ? std::stoi(v.get<std::string>()) : v.get<int>();
    else
        throw ConfigError("unknown config key: " + key);
}

void applyTree(ExperimentConfig& cfg, const json& j, const std::string& prefix) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it.value().is_object() && key != "scales")
            applyTree(cfg, it.value(), key);
        else
            applyKey(cfg, key, it.value());
    }
}

} // namespace

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    ExperimentConfig cfg;
    // profile first so explicit keys override it
    if (j.contains("profile")) cfg = default_config(j.at("profile").get<std::string>());
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "profile") continue;
        if (it.value().is_object())
            applyTree(cfg, it.value(), it.key());
        else
            applyKey(cfg, it.key(), it.value());
    }
    cfg.validate();
    return cfg;
}

void apply_override(ExperimentConfig& cfg, const std::string& kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value: " + kv);
    applyKey(cfg, kv.substr(0, eq), json(kv.substr(eq + 1)));
}

} // namespace suseg
