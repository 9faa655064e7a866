#include "suseg/aggregator.hpp"

#include <algorithm>
#include <stdexcept>

namespace suseg {

using nn::Node;
using nn::Param;
using nn::Tape;

void AggregatorConfig::validate() const {
    if (in_channels < 1) throw std::invalid_argument("in_channels must be >= 1");
    if (levels < 1) throw std::invalid_argument("levels must be >= 1");
    if (base_channels < 1) throw std::invalid_argument("base_channels must be >= 1");
    if (!(threshold > 0.f && threshold < 1.f)) throw std::invalid_argument("threshold must be in (0,1)");
}

std::vector<ScaleSetting> canonical_order(std::vector<ScaleSetting> scales) {
    std::sort(scales.begin(), scales.end(), [](const ScaleSetting& a, const ScaleSetting& b) {
        return a.v != b.v ? a.v > b.v : a.p > b.p;
    });
    return scales;
}

AggregatorInput stack_predictions(const std::vector<PredictionVolume>& preds, const Volume& original) {
    if (preds.empty()) throw VolumeError("no prediction volumes to stack");
    AggregatorInput in;
    in.shape = original.shape;

    std::vector<const PredictionVolume*> ordered;
    for (const auto& p : preds) ordered.push_back(&p);
    std::sort(ordered.begin(), ordered.end(), [](const PredictionVolume* a, const PredictionVolume* b) {
        return a->scale.v != b->scale.v ? a->scale.v > b->scale.v : a->scale.p > b->scale.p;
    });
    for (size_t i = 1; i < ordered.size(); ++i)
        if (ordered[i]->scale == ordered[i - 1]->scale) throw VolumeError("duplicate scale setting");

    for (const auto* p : ordered) {
        if (p->meta.original_shape != original.shape)
            throw VolumeError("prediction volume derives from a different CT");
        in.channels.push_back(to_original_grid(p->scaled, p->meta));
        in.channel_order.push_back(p->scale);
    }
    return in;
}

std::vector<float> slice_channels(const AggregatorInput& input, int z) {
    const int X = input.shape[0], Y = input.shape[1];
    std::vector<float> out(static_cast<size_t>(input.channels.size()) * X * Y);
    size_t i = 0;
    for (const auto& ch : input.channels)
        for (int y = 0; y < Y; ++y)
            for (int x = 0; x < X; ++x) out[i++] = ch.at(x, y, z);
    return out;
}

namespace {

struct ConvP {
    Param* w;
    Param* b;
};
struct NormP {
    Param* g;
    Param* b;
};
struct BlockP {
    ConvP c1, c2;
    NormP n1, n2;
};

} // namespace

struct Aggregator::Impl {
    nn::ParamStore store;
    std::vector<BlockP> enc_blocks;
    std::vector<BlockP> dec_blocks; // deepest first
    BlockP bottom;
    ConvP head;

    ConvP makeConv(std::mt19937_64& rng, const std::string& name, int cin, int cout, int k,
                   float gain = 1.f) {
        ConvP c;
        c.w = &store.add(name + ".w", {cout, cin, k * k, 1});
        c.b = &store.add(name + ".b", {cout, 1, 1, 1});
        nn::init_he_normal(*c.w, cin * k * k, rng, gain);
        return c;
    }
    NormP makeNorm(const std::string& name, int ch) {
        NormP n;
        n.g = &store.add(name + ".g", {ch, 1, 1, 1});
        n.b = &store.add(name + ".b", {ch, 1, 1, 1});
        std::fill(n.g->value.v.begin(), n.g->value.v.end(), 1.f);
        return n;
    }
    BlockP makeBlock(std::mt19937_64& rng, const std::string& name, int cin, int cout) {
        BlockP b;
        b.c1 = makeConv(rng, name + ".c1", cin, cout, 3);
        b.n1 = makeNorm(name + ".n1", cout);
        b.c2 = makeConv(rng, name + ".c2", cout, cout, 3);
        b.n2 = makeNorm(name + ".n2", cout);
        return b;
    }

    static Node* conv2d(Tape& t, Node* x, const ConvP& c, int k) {
        return nn::conv(t, x, *c.w, *c.b, {k, k, 1});
    }
    static Node* applyBlock(Tape& t, Node* x, const BlockP& b) {
        Node* h = nn::relu(t, nn::instance_norm(t, conv2d(t, x, b.c1, 3), *b.n1.g, *b.n1.b));
        return nn::relu(t, nn::instance_norm(t, conv2d(t, h, b.c2, 3), *b.n2.g, *b.n2.b));
    }
};

Aggregator::Aggregator(const AggregatorConfig& cfg) : impl_(std::make_unique<Impl>()), config_(cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.init_seed);
    const int L = cfg.levels;
    auto ch = [&](int level) { return cfg.base_channels << (level - 1); };

    for (int l = 1; l <= L; ++l)
        impl_->enc_blocks.push_back(impl_->makeBlock(rng, "enc.b" + std::to_string(l),
                                                     l == 1 ? cfg.in_channels : ch(l - 1), ch(l)));
    impl_->bottom = impl_->makeBlock(rng, "bottom", ch(L), ch(L) * 2);
    for (int l = L; l >= 1; --l)
        impl_->dec_blocks.push_back(impl_->makeBlock(
            rng, "dec.b" + std::to_string(l), (l == L ? ch(L) * 2 : ch(l + 1)) + ch(l), ch(l)));
    impl_->head = impl_->makeConv(rng, "head", ch(1), 1, 1, 0.05f);
}

Aggregator::~Aggregator() = default;
Aggregator::Aggregator(Aggregator&&) noexcept = default;
Aggregator& Aggregator::operator=(Aggregator&&) noexcept = default;

nn::ParamStore& Aggregator::params() { return impl_->store; }
const nn::ParamStore& Aggregator::params() const { return impl_->store; }

Node* Aggregator::forward(Tape& t, const std::vector<float>& slice, int X, int Y) const {
    const int K = config_.in_channels;
    if (slice.size() != static_cast<size_t>(K) * X * Y)
        throw std::invalid_argument("aggregator slice size / channel count mismatch");
    const int L = config_.levels;
    if (X % (1 << L) != 0 || Y % (1 << L) != 0)
        throw std::invalid_argument("slice dims must be divisible by 2^levels");

    Node* h = t.input({K, X, Y, 1}, slice.data());
    std::vector<Node*> skips;
    for (int l = 0; l < L; ++l) {
        h = Impl::applyBlock(t, h, impl_->enc_blocks[l]);
        skips.push_back(h);
        h = nn::pool(t, h, nn::PoolKind::Max, {2, 2, 1});
    }
    h = Impl::applyBlock(t, h, impl_->bottom);
    for (int l = L; l >= 1; --l) {
        Node* up = nn::upsample_linear(t, h, {h->val.x() * 2, h->val.y() * 2, 1});
        h = Impl::applyBlock(t, nn::concat_channels(t, {up, skips[l - 1]}),
                             impl_->dec_blocks[L - l]);
    }
    return nn::sigmoid(t, Impl::conv2d(t, h, impl_->head, 1));
}

Volume Aggregator::aggregate(const AggregatorInput& input) const {
    if (static_cast<int>(input.channels.size()) != config_.in_channels)
        throw VolumeError("channel-count mismatch between input and aggregator");
    Volume out(input.shape, input.channels.front().spacing, VolumeKind::Prediction);
    const int X = input.shape[0], Y = input.shape[1], Z = input.shape[2];
    for (int z = 0; z < Z; ++z) {
        Tape t;
        Node* o = forward(t, slice_channels(input, z), X, Y);
        for (int y = 0; y < Y; ++y)
            for (int x = 0; x < X; ++x)
                out.at(x, y, z) = o->val.v[static_cast<size_t>(y) * X + x];
    }
    return out;
}

} // namespace suseg
