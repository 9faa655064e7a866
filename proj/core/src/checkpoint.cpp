#include "suseg/checkpoint.hpp"

#include <json.hpp>

#include <fstream>

namespace suseg {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'S', 'S', 'C', 'K', '1', 0, 0, 0};

json isnetConfigJson(const ISNetConfig& c) {
    return json{{"p", c.p},
                {"levels", c.levels},
                {"base_channels", c.base_channels},
                {"dilation_rates", c.dilation_rates},
                {"use_multi_encoder", c.use_multi_encoder},
                {"use_deep_supervision", c.use_deep_supervision},
                {"init_seed", c.init_seed}};
}

ISNetConfig isnetConfigFromJson(const json& j) {
    ISNetConfig c;
    c.p = j.at("p");
    c.levels = j.at("levels");
    c.base_channels = j.at("base_channels");
    c.dilation_rates = j.at("dilation_rates").get<std::vector<int>>();
    c.use_multi_encoder = j.at("use_multi_encoder");
    c.use_deep_supervision = j.at("use_deep_supervision");
    c.init_seed = j.at("init_seed");
    return c;
}

void writeContainer(const json& header, const nn::ParamStore& store, const std::string& path) {
    json h = header;
    h["params"] = json::array();
    for (const auto& p : store.all())
        h["params"].push_back({{"name", p->name}, {"size", p->value.size()}});
    std::string hs = h.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw VolumeError("cannot open checkpoint for writing: " + path);
    f.write(kMagic, sizeof(kMagic));
    uint64_t len = hs.size();
    f.write(reinterpret_cast<const char*>(&len), sizeof(len));
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& p : store.all())
        f.write(reinterpret_cast<const char*>(p->value.v.data()),
                static_cast<std::streamsize>(p->value.size() * sizeof(float)));
    if (!f) throw VolumeError("checkpoint write failure: " + path);
}

json readContainer(std::ifstream& f, const std::string& path) {
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw VolumeError("not a checkpoint file: " + path);
    uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string hs(len, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(len));
    if (!f) throw VolumeError("truncated checkpoint: " + path);
    return json::parse(hs);
}

void readParams(std::ifstream& f, const json& header, nn::ParamStore& store, const std::string& path) {
    for (const auto& pj : header.at("params")) {
        nn::Param* p = store.find(pj.at("name"));
        if (!p || p->value.size() != pj.at("size").get<size_t>())
            throw VolumeError("checkpoint/config parameter mismatch: " +
                              pj.at("name").get<std::string>());
        f.read(reinterpret_cast<char*>(p->value.v.data()),
               static_cast<std::streamsize>(p->value.size() * sizeof(float)));
    }
    if (!f) throw VolumeError("truncated checkpoint data: " + path);
}

} // namespace

void save_isnet(const ISNet& model, const std::string& path) {
    json h;
    h["type"] = "isnet";
    h["config"] = isnetConfigJson(model.config());
    h["scale"] = {{"v", model.scale().v}, {"p", model.scale().p}};
    h["fingerprint"] = {{"train_seed", model.train_seed}, {"trained_epochs", model.trained_epochs}};
    writeContainer(h, model.params(), path);
}

ISNet load_isnet(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw VolumeError("cannot open checkpoint: " + path);
    json h = readContainer(f, path);
    if (h.at("type") != "isnet") throw VolumeError("checkpoint is not an ISNet model: " + path);
    ScaleSetting scale{h.at("scale").at("v"), h.at("scale").at("p")};
    ISNet model(isnetConfigFromJson(h.at("config")), scale);
    model.train_seed = h.at("fingerprint").at("train_seed");
    model.trained_epochs = h.at("fingerprint").at("trained_epochs");
    readParams(f, h, model.params(), path);
    return model;
}

ISNet load_isnet_checked(const std::string& path, const ISNetConfig& expect_cfg,
                         const ScaleSetting& expect_scale) {
    ISNet model = load_isnet(path);
    if (!(model.config() == expect_cfg) || !(model.scale() == expect_scale))
        throw VolumeError("checkpoint config/scale mismatch: " + path);
    return model;
}

void save_aggregator(const Aggregator& model, const std::string& path) {
    json h;
    h["type"] = "aggregator";
    h["config"] = {{"in_channels", model.config().in_channels},
                   {"levels", model.config().levels},
                   {"base_channels", model.config().base_channels},
                   {"threshold", model.config().threshold},
                   {"init_seed", model.config().init_seed}};
    h["channel_order"] = json::array();
    for (const auto& s : model.channel_order) h["channel_order"].push_back({{"v", s.v}, {"p", s.p}});
    h["fingerprint"] = {{"train_seed", model.train_seed}, {"trained_epochs", model.trained_epochs}};
    writeContainer(h, model.params(), path);
}

Aggregator load_aggregator(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw VolumeError("cannot open checkpoint: " + path);
    json h = readContainer(f, path);
    if (h.at("type") != "aggregator") throw VolumeError("checkpoint is not an aggregator: " + path);
    AggregatorConfig cfg;
    cfg.in_channels = h.at("config").at("in_channels");
    cfg.levels = h.at("config").at("levels");
    cfg.base_channels = h.at("config").at("base_channels");
    cfg.threshold = h.at("config").at("threshold");
    cfg.init_seed = h.at("config").at("init_seed");
    Aggregator model(cfg);
    for (const auto& sj : h.at("channel_order"))
        model.channel_order.push_back({sj.at("v"), sj.at("p")});
    model.train_seed = h.at("fingerprint").at("train_seed");
    model.trained_epochs = h.at("fingerprint").at("trained_epochs");
    readParams(f, h, model.params(), path);
    return model;
}

} // namespace suseg
