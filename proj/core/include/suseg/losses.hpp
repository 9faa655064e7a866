#pragma once

#include <cstddef>
#include <vector>

namespace suseg {

inline constexpr double kDiceEps = 1e-5;

// Soft dice loss 1 - (2*sum(p*g)+eps)/(sum(p)+sum(g)+eps).
double dice_loss(const std::vector<float>& pred, const std::vector<float>& gt);

// Accumulates scale * dL/dpred into grad.
void dice_loss_grad(const std::vector<float>& pred, const std::vector<float>& gt,
                    std::vector<float>& grad, float scale = 1.f);

// Two-class (foreground/background) generalized dice loss with class weights
// 1/(sum g_c)^2; classes with zero ground-truth mass are excluded.
double generalized_dice_loss(const std::vector<float>& pred, const std::vector<float>& gt);

void generalized_dice_loss_grad(const std::vector<float>& pred, const std::vector<float>& gt,
                                std::vector<float>& grad, float scale = 1.f);

} // namespace suseg
