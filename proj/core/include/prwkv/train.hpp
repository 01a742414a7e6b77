#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prwkv/config.hpp"
#include "prwkv/dataset.hpp"
#include "prwkv/model.hpp"

namespace prwkv {

// Decoupled weight decay; decay applies to rank >= 2 tensors only.
class AdamW {
  public:
    AdamW(std::vector<Tensor> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(double lr, double weight_decay);
    void zero_grads();

  private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
};

// Linear warmup into a cosine ramp down to lr * lr_min_frac.
double cosine_lr(int epoch, int total_epochs, int warmup_epochs, double lr, double lr_min_frac);

struct EpochLoss {
    int epoch = 0;
    double loss = 0.0;
};

struct PretrainResult {
    std::vector<EpochLoss> losses;
    std::string checkpoint_path;
};

// Masked-reconstruction pretraining on a synthetic mixture. Writes loss.csv,
// meta.json and checkpoint.prwk under out_dir (when non-empty).
PretrainResult pretrain(const RunConfig& cfg, std::uint64_t seed, const std::string& out_dir,
                        int threads = 1);

struct EpochAccuracy {
    int epoch = 0;
    double train_acc = 0.0;
    double test_acc = 0.0;
};

struct TrainClsResult {
    std::vector<EpochAccuracy> accuracy;
    int epochs_to_target = -1;  // first epoch reaching stop_train_acc, -1 if never
    std::string checkpoint_path;
};

TrainClsResult train_cls(const RunConfig& cfg, std::uint64_t seed, const std::string& out_dir,
                         int threads = 1);

// Accuracy of a model over labeled clouds; parallel over samples.
double evaluate_accuracy(const Model& m, const std::vector<LabeledCloud>& samples, int threads = 1);

void write_loss_csv(const std::string& path, const std::vector<EpochLoss>& rows);
void write_acc_csv(const std::string& path, const std::vector<EpochAccuracy>& rows);

// Applies train-time augmentation (random scale and translation) in place.
void augment_cloud(PointCloud& pc, const TrainConfig& t, Rng& rng);

}  // namespace prwkv
