#pragma once

#include "suseg/aggregator.hpp"
#include "suseg/isnet.hpp"

namespace suseg {

// Checkpoints are a small binary container: magic, JSON header describing the
// model config and parameter table, then raw float32 parameter data.
void save_isnet(const ISNet& model, const std::string& path);
ISNet load_isnet(const std::string& path);

void save_aggregator(const Aggregator& model, const std::string& path);
Aggregator load_aggregator(const std::string& path);

// Loaders that reject a checkpoint whose embedded config does not match.
ISNet load_isnet_checked(const std::string& path, const ISNetConfig& expect_cfg,
                         const ScaleSetting& expect_scale);

} // namespace suseg
