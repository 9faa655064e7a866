#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace suseg::nn {

// Dense float tensor with layout (C, X, Y, Z), x fastest. 2D data uses Z=1.
struct Tensor {
    std::array<int, 4> shape{0, 0, 0, 0};
    std::vector<float> v;

    Tensor() = default;
    explicit Tensor(std::array<int, 4> s, float fill = 0.f)
        : shape(s), v(static_cast<size_t>(s[0]) * s[1] * s[2] * s[3], fill) {}

    int c() const { return shape[0]; }
    int x() const { return shape[1]; }
    int y() const { return shape[2]; }
    int z() const { return shape[3]; }
    size_t size() const { return v.size(); }
    size_t spatial() const { return static_cast<size_t>(shape[1]) * shape[2] * shape[3]; }

    float* channel(int ci) { return v.data() + ci * spatial(); }
    const float* channel(int ci) const { return v.data() + ci * spatial(); }

    void zero() { std::fill(v.begin(), v.end(), 0.f); }
};

// Learnable parameter with gradient and Adam moments.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;

    explicit Param(std::string n, std::array<int, 4> s)
        : name(std::move(n)), value(s), grad(s), adam_m(s), adam_v(s) {}
};

// Owns all parameters of a model; names are unique and stable, which the
// checkpoint format relies on.
class ParamStore {
  public:
    Param& add(const std::string& name, std::array<int, 4> shape) {
        params_.push_back(std::make_unique<Param>(name, shape));
        return *params_.back();
    }
    std::vector<std::unique_ptr<Param>>& all() { return params_; }
    const std::vector<std::unique_ptr<Param>>& all() const { return params_; }
    Param* find(const std::string& name) {
        for (auto& p : params_)
            if (p->name == name) return p.get();
        return nullptr;
    }
    void zero_grad() {
        for (auto& p : params_) p->grad.zero();
    }
    size_t parameter_count() const {
        size_t n = 0;
        for (auto& p : params_) n += p->value.size();
        return n;
    }

  private:
    std::vector<std::unique_ptr<Param>> params_;
};

inline void init_he_normal(Param& p, int fan_in, std::mt19937_64& rng, float gain = 1.f) {
    std::normal_distribution<float> d(0.f, gain * std::sqrt(2.f / fan_in));
    for (float& w : p.value.v) w = d(rng);
}

struct AdamConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

class Adam {
  public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
    void step(ParamStore& store);

  private:
    AdamConfig cfg_;
    long t_ = 0;
};

} // namespace suseg::nn
