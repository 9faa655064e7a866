#include <doctest.h>

#include "suseg/nn/ops.hpp"

#include <cmath>
#include <random>

using namespace suseg::nn;

namespace {

Tensor randomTensor(std::array<int, 4> sh, uint64_t seed, float lo = -1.f, float hi = 1.f) {
    Tensor t(sh);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> d(lo, hi);
    for (float& x : t.v) x = d(rng);
    return t;
}

// FD check: loss = sum(out * probe) with a fixed random probe; compares the
// analytic gradient of every parameter entry and the input.
template <typename Builder>
void fdCheck(ParamStore& store, const Tensor& input, Builder&& build, uint64_t probeSeed,
             double tol = 2e-2) {
    auto runLoss = [&]() {
        Tape t;
        Node* x = t.input(input.shape, input.v.data());
        Node* out = build(t, x);
        Tensor probe = randomTensor(out->val.shape, probeSeed);
        double loss = 0;
        for (size_t i = 0; i < out->val.v.size(); ++i) loss += out->val.v[i] * probe.v[i];
        return std::pair<double, Node*>(loss, out);
    };

    // analytic
    Tape t;
    Node* x = t.input(input.shape, input.v.data());
    Node* out = build(t, x);
    Tensor probe = randomTensor(out->val.shape, probeSeed);
    for (size_t i = 0; i < out->grad.v.size(); ++i) out->grad.v[i] = probe.v[i];
    store.zero_grad();
    t.backward();

    const double h = 1e-3;
    int checked = 0;
    for (auto& p : store.all()) {
        for (size_t i = 0; i < p->value.v.size(); i += std::max<size_t>(1, p->value.v.size() / 5)) {
            float keep = p->value.v[i];
            p->value.v[i] = keep + static_cast<float>(h);
            double up = runLoss().first;
            p->value.v[i] = keep - static_cast<float>(h);
            double dn = runLoss().first;
            p->value.v[i] = keep;
            double fd = (up - dn) / (2 * h);
            double an = p->grad.v[i];
            double rel = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
            INFO(p->name, "[", i, "] fd=", fd, " an=", an);
            CHECK(rel < tol);
            ++checked;
        }
    }
    CHECK(checked > 0);
}

} // namespace

TEST_CASE("conv forward: identity and shifted kernels") {
    Tape t;
    Tensor in = randomTensor({1, 4, 4, 4}, 1);
    Node* x = t.input(in.shape, in.v.data());
    ParamStore store;
    Param& w = store.add("w", {1, 1, 27, 1});
    Param& b = store.add("b", {1, 1, 1, 1});
    w.value.v[13] = 1.f; // center tap of a 3x3x3 kernel
    Node* out = conv(t, x, w, b, {3, 3, 3});
    REQUIRE(out->val.shape == in.shape);
    for (size_t i = 0; i < in.v.size(); ++i) CHECK(out->val.v[i] == in.v[i]);

    // +x neighbor tap: tap index (2,1,1) = 2 + 3*(1 + 3*1) = 14
    w.value.v[13] = 0.f;
    w.value.v[14] = 1.f;
    Tape t2;
    Node* x2 = t2.input(in.shape, in.v.data());
    Node* out2 = conv(t2, x2, w, b, {3, 3, 3});
    CHECK(out2->val.v[0] == in.v[1]);       // x=0 reads x=1
    CHECK(out2->val.v[3] == 0.f);           // x=3 reads past the zero pad
}

TEST_CASE("conv gradients match finite differences") {
    for (auto ks : {std::array<int, 3>{3, 3, 3}, std::array<int, 3>{1, 1, 1},
                    std::array<int, 3>{3, 3, 1}}) {
        for (auto dil : {std::array<int, 3>{1, 1, 1}, std::array<int, 3>{2, 2, 2}}) {
            if (ks[0] == 1 && dil[0] == 2) continue;
            ParamStore store;
            Param& w = store.add("w", {3, 2, ks[0] * ks[1] * ks[2], 1});
            Param& b = store.add("b", {3, 1, 1, 1});
            std::mt19937_64 rng(7);
            init_he_normal(w, 2 * ks[0] * ks[1] * ks[2], rng);
            init_he_normal(b, 4, rng);
            Tensor in = randomTensor({2, 5, 4, 3}, 9);
            fdCheck(store, in,
                    [&](Tape& t, Node* x) { return conv(t, x, w, b, ks, dil); }, 21);
        }
    }
}

TEST_CASE("instance norm: standardizes and backprop checks out") {
    Tensor in = randomTensor({2, 4, 4, 2}, 5, 0.f, 10.f);
    ParamStore store;
    Param& g = store.add("g", {2, 1, 1, 1});
    Param& be = store.add("be", {2, 1, 1, 1});
    g.value.v = {1.f, 2.f};
    be.value.v = {0.f, 1.f};

    Tape t;
    Node* x = t.input(in.shape, in.v.data());
    Node* out = instance_norm(t, x, g, be);
    for (int c = 0; c < 2; ++c) {
        double mean = 0, var = 0;
        const float* oc = out->val.channel(c);
        size_t sp = out->val.spatial();
        for (size_t i = 0; i < sp; ++i) mean += oc[i];
        mean /= sp;
        for (size_t i = 0; i < sp; ++i) var += (oc[i] - mean) * (oc[i] - mean);
        var /= sp;
        CHECK(mean == doctest::Approx(be.value.v[c]).epsilon(1e-3));
        CHECK(std::sqrt(var) == doctest::Approx(g.value.v[c]).epsilon(1e-3));
    }

    fdCheck(store, in, [&](Tape& t2, Node* x2) { return instance_norm(t2, x2, g, be); }, 23);
}

TEST_CASE("relu and sigmoid") {
    Tensor in(std::array<int, 4>{1, 4, 1, 1});
    in.v = {-2.f, -0.5f, 0.5f, 2.f};
    Tape t;
    Node* x = t.input(in.shape, in.v.data());
    Node* r = relu(t, x);
    CHECK(r->val.v == std::vector<float>{0.f, 0.f, 0.5f, 2.f});
    Node* s = sigmoid(t, x);
    for (size_t i = 0; i < 4; ++i)
        CHECK(s->val.v[i] == doctest::Approx(1.0 / (1.0 + std::exp(-in.v[i]))).epsilon(1e-6));
}

TEST_CASE("pooling exact values") {
    Tensor in(std::array<int, 4>{1, 2, 2, 1});
    in.v = {1.f, 3.f, 5.f, 7.f};
    Tape t;
    Node* x = t.input(in.shape, in.v.data());
    Node* mx = pool(t, x, PoolKind::Max, {2, 2, 1});
    Node* av = pool(t, x, PoolKind::Avg, {2, 2, 1});
    CHECK(mx->val.v[0] == 7.f);
    CHECK(av->val.v[0] == 4.f);
    CHECK(mx->val.shape == std::array<int, 4>{1, 1, 1, 1});
}

TEST_CASE("mixed pool boundary identities are bit-exact") {
    Tensor in = randomTensor({3, 8, 6, 4}, 13);
    ParamStore store;
    Param& alphaHi = store.add("ah", {1, 1, 1, 1});
    Param& alphaLo = store.add("al", {1, 1, 1, 1});
    alphaHi.value.v[0] = 100.f;  // sigmoid -> 1
    alphaLo.value.v[0] = -100.f; // sigmoid -> 0

    Tape t;
    Node* x = t.input(in.shape, in.v.data());
    Node* mixMax = mixed_pool(t, x, alphaHi, {2, 2, 2});
    Node* mixAvg = mixed_pool(t, x, alphaLo, {2, 2, 2});
    Node* mx = pool(t, x, PoolKind::Max, {2, 2, 2});
    Node* av = pool(t, x, PoolKind::Avg, {2, 2, 2});
    REQUIRE(mixMax->val.v.size() == mx->val.v.size());
    for (size_t i = 0; i < mx->val.v.size(); ++i) {
        CHECK(mixMax->val.v[i] == mx->val.v[i]);
        CHECK(mixAvg->val.v[i] == av->val.v[i]);
    }
}

TEST_CASE("mixed pool on constants is constant, gradients check out") {
    Tensor cst(std::array<int, 4>{1, 4, 4, 4}, 0.37f);
    ParamStore store;
    Param& alpha = store.add("a", {1, 1, 1, 1});
    alpha.value.v[0] = 0.3f;
    Tape t;
    Node* x = t.input(cst.shape, cst.v.data());
    Node* out = mixed_pool(t, x, alpha, {2, 2, 2});
    for (float v : out->val.v) CHECK(v == doctest::Approx(0.37f).epsilon(1e-6));

    Tensor in = randomTensor({2, 4, 4, 4}, 17);
    fdCheck(store, in, [&](Tape& t2, Node* x2) { return mixed_pool(t2, x2, alpha, {2, 2, 2}); },
            29);
}

TEST_CASE("pool rejects odd extents") {
    Tensor in = randomTensor({1, 3, 4, 4}, 19);
    Tape t;
    Node* x = t.input(in.shape, in.v.data());
    CHECK_THROWS(pool(t, x, PoolKind::Max, {2, 2, 2}));
}

TEST_CASE("upsample_linear: constant, ramp, gradient") {
    Tensor cst(std::array<int, 4>{1, 2, 2, 2}, 0.5f);
    Tape t;
    Node* x = t.input(cst.shape, cst.v.data());
    Node* up = upsample_linear(t, x, {4, 4, 4});
    CHECK(up->val.shape == std::array<int, 4>{1, 4, 4, 4});
    for (float v : up->val.v) CHECK(v == doctest::Approx(0.5f).epsilon(1e-6));

    // center-aligned upsample of a ramp keeps interior slopes
    Tensor ramp(std::array<int, 4>{1, 4, 1, 1});
    ramp.v = {0.f, 1.f, 2.f, 3.f};
    Tape t2;
    Node* xr = t2.input(ramp.shape, ramp.v.data());
    Node* upr = upsample_linear(t2, xr, {8, 1, 1});
    CHECK(upr->val.v[3] == doctest::Approx(1.25f).epsilon(1e-5));
    CHECK(upr->val.v[4] == doctest::Approx(1.75f).epsilon(1e-5));

    ParamStore store;
    Param& w = store.add("w", {2, 2, 1, 1});
    Param& b = store.add("b", {2, 1, 1, 1});
    std::mt19937_64 rng(3);
    init_he_normal(w, 2, rng);
    Tensor in = randomTensor({2, 3, 3, 2}, 23);
    fdCheck(store, in,
            [&](Tape& t3, Node* x3) {
                Node* c = conv(t3, x3, w, b, {1, 1, 1});
                return upsample_linear(t3, c, {6, 6, 4});
            },
            31);
}

TEST_CASE("concat channels forward and backward") {
    Tensor a = randomTensor({2, 3, 3, 3}, 29);
    ParamStore store;
    Param& w = store.add("w", {2, 2, 1, 1});
    Param& b = store.add("b", {2, 1, 1, 1});
    std::mt19937_64 rng(11);
    init_he_normal(w, 2, rng);

    Tape t;
    Node* x = t.input(a.shape, a.v.data());
    Node* c1 = conv(t, x, w, b, {1, 1, 1});
    Node* cat = concat_channels(t, {x, c1});
    REQUIRE(cat->val.shape == std::array<int, 4>{4, 3, 3, 3});
    for (size_t i = 0; i < a.v.size(); ++i) {
        CHECK(cat->val.v[i] == a.v[i]);
        CHECK(cat->val.v[a.v.size() + i] == c1->val.v[i]);
    }

    fdCheck(store, a,
            [&](Tape& t2, Node* x2) {
                Node* c = conv(t2, x2, w, b, {1, 1, 1});
                return concat_channels(t2, {x2, c});
            },
            37);
}

TEST_CASE("adam reduces a quadratic") {
    ParamStore store;
    Param& p = store.add("p", {1, 4, 1, 1});
    p.value.v = {2.f, -3.f, 1.f, 4.f};
    Adam opt(AdamConfig{0.1f});
    for (int it = 0; it < 200; ++it) {
        store.zero_grad();
        for (size_t i = 0; i < 4; ++i) p.grad.v[i] = p.value.v[i]; // d/dx of x^2/2
        opt.step(store);
    }
    for (float x : p.value.v) CHECK(std::abs(x) < 1e-2);
}
