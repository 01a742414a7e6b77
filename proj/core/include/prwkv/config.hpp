#pragma once

#include <string>
#include <vector>

#include "prwkv/model.hpp"

namespace prwkv {

struct TrainConfig {
    int epochs = 50;
    int batch_size = 16;
    double lr = 1e-3;
    double weight_decay = 5e-2;
    int warmup_epochs = 3;
    double lr_min_frac = 0.01;

    // synthetic data
    int points = 512;
    int train_per_class = 100;
    int test_per_class = 25;
    int pretrain_samples = 256;
    double jitter = 0.01;

    // augmentation
    bool augment = true;
    double aug_scale_lo = 0.8;
    double aug_scale_hi = 1.2;
    double aug_translate = 0.1;

    // fresh random masks every epoch; off pins each sample's mask for exact
    // epoch-to-epoch repeatability
    bool resample_masks = true;

    double stop_train_acc = -1.0;  // early stop once train accuracy reaches this, off when negative
    std::string init_checkpoint;   // optional warm start
    std::string checkpoint;        // eval input
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
};

// Plain "key = value" lines; '#' starts a comment. Unknown keys are rejected
// with an error naming the key.
RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");

std::string config_to_string(const RunConfig& cfg);

}  // namespace prwkv
