#include "suseg/isnet.hpp"

#include <stdexcept>

namespace suseg {

using nn::Node;
using nn::Param;
using nn::Tape;

void ISNetConfig::validate() const {
    if (levels < 2) throw std::invalid_argument("ISNet needs at least 2 levels");
    if (p < 8 || p % (1 << levels) != 0)
        throw std::invalid_argument("patch size must be >= 8 and divisible by 2^levels");
    if (base_channels < 1) throw std::invalid_argument("base_channels must be positive");
    if (dilation_rates.empty()) throw std::invalid_argument("dilation_rates must be non-empty");
    for (size_t i = 1; i < dilation_rates.size(); ++i)
        if (dilation_rates[i] <= dilation_rates[i - 1])
            throw std::invalid_argument("dilation_rates must be strictly increasing");
}

namespace {

struct ConvP {
    Param* w;
    Param* b;
    std::array<int, 3> k;
    std::array<int, 3> dil;
};
struct NormP {
    Param* g;
    Param* b;
};
struct BlockP {
    ConvP c1, c2;
    NormP n1, n2;
};
struct DilBlockP {
    std::vector<ConvP> branches;
    std::vector<NormP> bnorms;
    ConvP fuse;
    NormP fnorm;
};
struct EncoderP {
    std::vector<BlockP> blocks;                  // one per level
    std::vector<Param*> pool_alpha;              // main-path mixed pool per level
    std::vector<std::vector<Param*>> dense_alpha; // extra pools of each dense route
};

} // namespace

struct ISNet::Impl {
    nn::ParamStore store;
    std::vector<EncoderP> encoders; // [W] or [W, N]
    DilBlockP bottleneck;
    DilBlockP dec_first; // dilated block at the first decoder level
    std::vector<BlockP> dec_blocks; // remaining decoder levels, deepest first
    ConvP head_main;
    ConvP head_quarter;
    ConvP head_half;

    ConvP makeConv(std::mt19937_64& rng, const std::string& name, int cin, int cout, int k, int dil,
                   float gain = 1.f) {
        ConvP c;
        c.k = {k, k, k};
        c.dil = {dil, dil, dil};
        c.w = &store.add(name + ".w", {cout, cin, k * k * k, 1});
        c.b = &store.add(name + ".b", {cout, 1, 1, 1});
        nn::init_he_normal(*c.w, cin * k * k * k, rng, gain);
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
        b.c1 = makeConv(rng, name + ".c1", cin, cout, 3, 1);
        b.n1 = makeNorm(name + ".n1", cout);
        b.c2 = makeConv(rng, name + ".c2", cout, cout, 3, 1);
        b.n2 = makeNorm(name + ".n2", cout);
        return b;
    }
    DilBlockP makeDilBlock(std::mt19937_64& rng, const std::string& name, int cin, int cout,
                           const std::vector<int>& rates) {
        DilBlockP d;
        for (size_t i = 0; i < rates.size(); ++i) {
            d.branches.push_back(
                makeConv(rng, name + ".r" + std::to_string(rates[i]), cin, cout, 3, rates[i]));
            d.bnorms.push_back(makeNorm(name + ".rn" + std::to_string(rates[i]), cout));
        }
        d.fuse = makeConv(rng, name + ".fuse", cout * static_cast<int>(rates.size()), cout, 1, 1);
        d.fnorm = makeNorm(name + ".fn", cout);
        return d;
    }

    static Node* applyConv(Tape& t, Node* x, const ConvP& c) {
        return nn::conv(t, x, *c.w, *c.b, c.k, c.dil);
    }
    static Node* applyBlock(Tape& t, Node* x, const BlockP& b) {
        Node* h = nn::relu(t, nn::instance_norm(t, applyConv(t, x, b.c1), *b.n1.g, *b.n1.b));
        return nn::relu(t, nn::instance_norm(t, applyConv(t, h, b.c2), *b.n2.g, *b.n2.b));
    }
    static Node* applyDilBlock(Tape& t, Node* x, const DilBlockP& d) {
        std::vector<Node*> outs;
        for (size_t i = 0; i < d.branches.size(); ++i)
            outs.push_back(
                nn::relu(t, nn::instance_norm(t, applyConv(t, x, d.branches[i]), *d.bnorms[i].g,
                                              *d.bnorms[i].b)));
        Node* cat = nn::concat_channels(t, outs);
        return nn::relu(t, nn::instance_norm(t, applyConv(t, cat, d.fuse), *d.fnorm.g, *d.fnorm.b));
    }
};

ISNet::ISNet(const ISNetConfig& cfg, const ScaleSetting& scale)
    : impl_(std::make_unique<Impl>()), config_(cfg), scale_(scale) {
    cfg.validate();
    scale.validate();
    if (cfg.p != scale.p) throw std::invalid_argument("config.p must equal scale.p");

    std::mt19937_64 rng(cfg.init_seed);
    const int L = cfg.levels;
    auto ch = [&](int level) { return cfg.base_channels << (level - 1); }; // level 1..L

    const int n_paths = cfg.use_multi_encoder ? 2 : 1;
    for (int e = 0; e < n_paths; ++e) {
        EncoderP enc;
        std::string en = "enc" + std::to_string(e);
        for (int l = 1; l <= L; ++l) {
            enc.blocks.push_back(impl_->makeBlock(rng, en + ".b" + std::to_string(l),
                                                  l == 1 ? 1 : ch(l - 1), ch(l)));
            enc.pool_alpha.push_back(
                &impl_->store.add(en + ".pool" + std::to_string(l) + ".alpha", {1, 1, 1, 1}));
        }
        for (int l = 1; l <= L; ++l) {
            std::vector<Param*> chain;
            for (int j = 0; j < L - l; ++j)
                chain.push_back(&impl_->store.add(
                    en + ".dense" + std::to_string(l) + ".alpha" + std::to_string(j), {1, 1, 1, 1}));
            enc.dense_alpha.push_back(std::move(chain));
        }
        impl_->encoders.push_back(std::move(enc));
    }

    int sum_ch = 0;
    for (int l = 1; l <= L; ++l) sum_ch += ch(l);
    const int cB = cfg.base_channels << L;
    impl_->bottleneck = impl_->makeDilBlock(rng, "bneck", n_paths * sum_ch, cB, cfg.dilation_rates);

    // decoder, deepest stage first; first stage is a dilated block
    impl_->dec_first = impl_->makeDilBlock(rng, "dec" + std::to_string(L), cB + ch(L), ch(L),
                                           cfg.dilation_rates);
    for (int l = L - 1; l >= 1; --l)
        impl_->dec_blocks.push_back(
            impl_->makeBlock(rng, "dec" + std::to_string(l), ch(l + 1) + ch(l), ch(l)));

    impl_->head_main = impl_->makeConv(rng, "head.main", ch(1), 1, 1, 1, 0.05f);
    if (cfg.use_deep_supervision) {
        impl_->head_quarter = impl_->makeConv(rng, "head.q", ch(L), 1, 1, 1, 0.05f);
        impl_->head_half = impl_->makeConv(rng, "head.h", ch(L - 1), 1, 1, 1, 0.05f);
    }
}

ISNet::~ISNet() = default;
ISNet::ISNet(ISNet&&) noexcept = default;
ISNet& ISNet::operator=(ISNet&&) noexcept = default;

nn::ParamStore& ISNet::params() { return impl_->store; }
const nn::ParamStore& ISNet::params() const { return impl_->store; }

ISNet::Outputs ISNet::forward(Tape& t, const std::vector<float>& wpatch,
                              const std::vector<float>& npatch) const {
    const int p = config_.p;
    const size_t n = static_cast<size_t>(p) * p * p;
    if (wpatch.size() != n) throw std::invalid_argument("WRange patch size mismatch");
    if (config_.use_multi_encoder && npatch.size() != n)
        throw std::invalid_argument("NRange patch size mismatch");

    const int L = config_.levels;
    std::array<int, 3> f2 = {2, 2, 2};

    std::vector<Node*> routes;                   // dense-pooled features for the bottleneck
    std::vector<Node*> skips;                    // WRange encoder features per level
    for (size_t e = 0; e < impl_->encoders.size(); ++e) {
        const EncoderP& enc = impl_->encoders[e];
        Node* h = t.input({1, p, p, p}, (e == 0 ? wpatch : npatch).data());
        std::vector<Node*> feats;
        for (int l = 0; l < L; ++l) {
            Node* f = Impl::applyBlock(t, h, enc.blocks[l]);
            feats.push_back(f);
            h = nn::mixed_pool(t, f, *enc.pool_alpha[l], f2); // main path downsample
        }
        for (int l = 0; l < L; ++l) {
            Node* r = l == L - 1 ? h : nn::mixed_pool(t, feats[l], *enc.pool_alpha[l], f2);
            // chain the route down to the bottleneck resolution
            for (Param* a : enc.dense_alpha[l]) r = nn::mixed_pool(t, r, *a, f2);
            routes.push_back(r);
        }
        if (e == 0) skips = feats;
    }

    Node* state = Impl::applyDilBlock(t, nn::concat_channels(t, routes), impl_->bottleneck);

    Outputs out;
    for (int l = L; l >= 1; --l) {
        Node* up = nn::upsample_linear(
            t, state, {state->val.x() * 2, state->val.y() * 2, state->val.z() * 2});
        Node* cat = nn::concat_channels(t, {up, skips[l - 1]});
        state = l == L ? Impl::applyDilBlock(t, cat, impl_->dec_first)
                       : Impl::applyBlock(t, cat, impl_->dec_blocks[L - 1 - l]);
        if (config_.use_deep_supervision) {
            if (l == L)
                out.sub_quarter = nn::upsample_linear(
                    t, nn::sigmoid(t, Impl::applyConv(t, state, impl_->head_quarter)), {p, p, p});
            else if (l == L - 1)
                out.sub_half = nn::upsample_linear(
                    t, nn::sigmoid(t, Impl::applyConv(t, state, impl_->head_half)), {p, p, p});
        }
    }
    out.main = nn::sigmoid(t, Impl::applyConv(t, state, impl_->head_main));
    return out;
}

std::vector<float> ISNet::predict_patch(const PatchSample& sample) const {
    if (!(sample.scale == scale_)) throw std::invalid_argument("patch/model scale mismatch");
    Tape t;
    Outputs o = forward(t, sample.wrange_patch, sample.nrange_patch);
    return o.main->val.v;
}

} // namespace suseg
