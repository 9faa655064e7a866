#include "suseg/losses.hpp"

#include <stdexcept>

namespace suseg {
namespace {

void checkShapes(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size() || a.empty()) throw std::invalid_argument("loss shape mismatch");
}

struct GdlSums {
    double wf = 0, wb = 0;  // class weights (0 = excluded)
    double num = 0, den = 0;
};

GdlSums gdlSums(const std::vector<float>& pred, const std::vector<float>& gt) {
    double gf = 0, gb = 0, inter_f = 0, inter_b = 0, sum_pf = 0, sum_pb = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double p = pred[i], g = gt[i];
        gf += g;
        gb += 1.0 - g;
        inter_f += p * g;
        inter_b += (1.0 - p) * (1.0 - g);
        sum_pf += p;
        sum_pb += 1.0 - p;
    }
    GdlSums s;
    s.wf = gf > 0 ? 1.0 / (gf * gf) : 0.0;
    s.wb = gb > 0 ? 1.0 / (gb * gb) : 0.0;
    s.num = s.wf * inter_f + s.wb * inter_b;
    s.den = s.wf * (sum_pf + gf) + s.wb * (sum_pb + gb);
    return s;
}

} // namespace

double dice_loss(const std::vector<float>& pred, const std::vector<float>& gt) {
    checkShapes(pred, gt);
    double inter = 0, sp = 0, sg = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        inter += static_cast<double>(pred[i]) * gt[i];
        sp += pred[i];
        sg += gt[i];
    }
    return 1.0 - (2.0 * inter + kDiceEps) / (sp + sg + kDiceEps);
}

void dice_loss_grad(const std::vector<float>& pred, const std::vector<float>& gt,
                    std::vector<float>& grad, float scale) {
    checkShapes(pred, gt);
    if (grad.size() != pred.size()) throw std::invalid_argument("gradient shape mismatch");
    double inter = 0, sp = 0, sg = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        inter += static_cast<double>(pred[i]) * gt[i];
        sp += pred[i];
        sg += gt[i];
    }
    const double T = sp + sg + kDiceEps;
    const double N = 2.0 * inter + kDiceEps;
    for (size_t i = 0; i < pred.size(); ++i)
        grad[i] += scale * static_cast<float>(-(2.0 * gt[i] * T - N) / (T * T));
}

double generalized_dice_loss(const std::vector<float>& pred, const std::vector<float>& gt) {
    checkShapes(pred, gt);
    GdlSums s = gdlSums(pred, gt);
    if (s.den <= 0) return 0.0;
    return 1.0 - 2.0 * s.num / s.den;
}

void generalized_dice_loss_grad(const std::vector<float>& pred, const std::vector<float>& gt,
                                std::vector<float>& grad, float scale) {
    checkShapes(pred, gt);
    if (grad.size() != pred.size()) throw std::invalid_argument("gradient shape mismatch");
    GdlSums s = gdlSums(pred, gt);
    if (s.den <= 0) return;
    const double dden = s.wf - s.wb; // d(den)/dp_i, identical for all i
    const double den2 = s.den * s.den;
    for (size_t i = 0; i < pred.size(); ++i) {
        double g = gt[i];
        double dnum = s.wf * g - s.wb * (1.0 - g);
        grad[i] += scale * static_cast<float>(-2.0 * (dnum * s.den - s.num * dden) / den2);
    }
}

} // namespace suseg
