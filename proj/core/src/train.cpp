#include "prwkv/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace prwkv {

AdamW::AdamW(std::vector<Tensor> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const Tensor& p : params_) {
        m_.emplace_back(p.data().size(), 0.0);
        v_.emplace_back(p.data().size(), 0.0);
    }
}

void AdamW::step(double lr, double weight_decay) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        Tensor& p = params_[pi];
        auto& data = p.mutable_data();
        const auto& g = p.grad();
        auto& m = m_[pi];
        auto& v = v_[pi];
        const bool decay = p.rank() >= 2;
        for (std::size_t i = 0; i < data.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            data[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + (decay ? weight_decay * data[i] : 0.0));
        }
    }
}

void AdamW::zero_grads() {
    for (Tensor& p : params_) p.zero_grad();
}

double cosine_lr(int epoch, int total_epochs, int warmup_epochs, double lr, double lr_min_frac) {
    const double lr_min = lr * lr_min_frac;
    if (warmup_epochs > 0 && epoch < warmup_epochs)
        return lr * static_cast<double>(epoch + 1) / static_cast<double>(warmup_epochs);
    const int span = std::max(total_epochs - warmup_epochs, 1);
    const double t = static_cast<double>(epoch - warmup_epochs) / static_cast<double>(span);
    return lr_min + 0.5 * (lr - lr_min) * (1.0 + std::cos(3.14159265358979323846 * std::min(t, 1.0)));
}

void augment_cloud(PointCloud& pc, const TrainConfig& t, Rng& rng) {
    const double s = rng.uniform(t.aug_scale_lo, t.aug_scale_hi);
    const double dx = rng.uniform(-t.aug_translate, t.aug_translate);
    const double dy = rng.uniform(-t.aug_translate, t.aug_translate);
    const double dz = rng.uniform(-t.aug_translate, t.aug_translate);
    for (std::int64_t i = 0; i < pc.size(); ++i) {
        pc.coords[i * 3] = pc.coords[i * 3] * s + dx;
        pc.coords[i * 3 + 1] = pc.coords[i * 3 + 1] * s + dy;
        pc.coords[i * 3 + 2] = pc.coords[i * 3 + 2] * s + dz;
    }
}

namespace {

void abort_on_nonfinite(double loss_value) {
    if (std::isfinite(loss_value)) return;
    const TensorNode* bad = first_nonfinite_on_tape();
    throw std::runtime_error(std::string("non-finite loss; first non-finite tensor: ") +
                             (bad ? bad->op : "<input>"));
}

void write_meta(const std::string& out_dir, const std::string& command, const RunConfig& cfg,
                std::uint64_t seed, int threads, std::int64_t param_count) {
    nlohmann::json j;
    j["command"] = command;
    j["seed"] = seed;
    j["threads"] = threads;
    j["parameters"] = param_count;
    j["mask_ratio"] = cfg.model.mask_ratio;
    nlohmann::json jc;
    std::istringstream cs(config_to_string(cfg));
    std::string line;
    while (std::getline(cs, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        auto strip = [](std::string& s) {
            while (!s.empty() && s.front() == ' ') s.erase(s.begin());
            while (!s.empty() && s.back() == ' ') s.pop_back();
        };
        strip(key);
        strip(val);
        jc[key] = val;
    }
    j["config"] = jc;
    std::ofstream f(out_dir + "/meta.json", std::ios::trunc);
    f << j.dump(2) << "\n";
}

// Deterministic per-(epoch, position) shuffle.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, 0x73687566ULL, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_index(i));
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

void parallel_for(std::int64_t n, int threads, const std::function<void(std::int64_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<std::int64_t> next{0};
    const int workers = static_cast<int>(std::min<std::int64_t>(threads, n));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            set_grad_enabled(false);
            while (true) {
                const std::int64_t i = next.fetch_add(1);
                if (i >= n) break;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace

double evaluate_accuracy(const Model& m, const std::vector<LabeledCloud>& samples, int threads) {
    std::vector<int> correct(samples.size(), 0);
    parallel_for(static_cast<std::int64_t>(samples.size()), threads, [&](std::int64_t i) {
        NoGradGuard ng;
        const auto& s = samples[static_cast<std::size_t>(i)];
        ScalePyramid pyr = prepare_pyramid(m.cfg, s.cloud, /*masked=*/false, 0);
        Tensor logits = classify_logits(m, pyr);
        correct[static_cast<std::size_t>(i)] = argmax_class(logits) == s.label ? 1 : 0;
    });
    std::int64_t hits = 0;
    for (int c : correct) hits += c;
    return samples.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(samples.size());
}

void write_loss_csv(const std::string& path, const std::vector<EpochLoss>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "epoch,loss\n";
    f.precision(17);
    for (const auto& r : rows) f << r.epoch << ',' << r.loss << '\n';
}

void write_acc_csv(const std::string& path, const std::vector<EpochAccuracy>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "epoch,train_acc,test_acc\n";
    f.precision(17);
    for (const auto& r : rows) f << r.epoch << ',' << r.train_acc << ',' << r.test_acc << '\n';
}

PretrainResult pretrain(const RunConfig& cfg, std::uint64_t seed, const std::string& out_dir,
                        int threads) {
    const TrainConfig& tc = cfg.train;
    Model model = build_model(cfg.model, seed);
    if (!tc.init_checkpoint.empty()) load_checkpoint(model.store, tc.init_checkpoint, /*strict=*/false);
    std::vector<PointCloud> clouds =
        make_pretrain_dataset(tc.pretrain_samples, tc.points, tc.jitter, derive_seed(seed, 0x64617461ULL));

    AdamW opt(model.store.tensors());
    PretrainResult result;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        write_meta(out_dir, "pretrain", cfg, seed, threads, model.store.total_parameters());
    }

    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        const double lr = cosine_lr(epoch, tc.epochs, tc.warmup_epochs, tc.lr, tc.lr_min_frac);
        const auto order = epoch_order(clouds.size(), seed, epoch);
        double epoch_loss = 0.0;
        std::int64_t in_batch = 0;
        opt.zero_grads();
        for (std::size_t oi = 0; oi < order.size(); ++oi) {
            const std::size_t si = order[oi];
            PointCloud pc = clouds[si];
            Rng aug_rng(derive_seed(seed, 0x617567ULL + static_cast<std::uint64_t>(epoch), si));
            pc = normalize(pc);
            if (tc.augment) augment_cloud(pc, tc, aug_rng);
            canonical_order(pc);
            ScalePyramid pyr = build_pyramid(pc, cfg.model.scale_sizes, cfg.model.ks, 0);
            const std::uint64_t mask_epoch = tc.resample_masks ? static_cast<std::uint64_t>(epoch) : 0;
            apply_multiscale_mask(pyr, cfg.model.mask_ratio,
                                  derive_seed(seed, 0x6d61736bULL + mask_epoch, si));
            tape().clear();
            Tensor loss = pretrain_loss(model, pyr);
            abort_on_nonfinite(loss.item());
            epoch_loss += loss.item();
            backward(mul_scalar(loss, 1.0 / static_cast<double>(tc.batch_size)));
            tape().clear();
            ++in_batch;
            if (in_batch == tc.batch_size || oi + 1 == order.size()) {
                opt.step(lr, tc.weight_decay);
                opt.zero_grads();
                in_batch = 0;
            }
        }
        result.losses.push_back({epoch + 1, epoch_loss / static_cast<double>(order.size())});
        if (!out_dir.empty()) write_loss_csv(out_dir + "/loss.csv", result.losses);
    }

    if (!out_dir.empty()) {
        result.checkpoint_path = out_dir + "/checkpoint.prwk";
        save_checkpoint(model.store, result.checkpoint_path);
    }
    return result;
}

TrainClsResult train_cls(const RunConfig& cfg, std::uint64_t seed, const std::string& out_dir,
                         int threads) {
    const TrainConfig& tc = cfg.train;
    Model model = build_model(cfg.model, seed);
    if (!tc.init_checkpoint.empty()) load_checkpoint(model.store, tc.init_checkpoint, /*strict=*/false);
    SyntheticDataset data = make_classification_dataset(cfg.model.classes, tc.train_per_class,
                                                        tc.test_per_class, tc.points, tc.jitter,
                                                        derive_seed(seed, 0x64617461ULL));

    AdamW opt(model.store.tensors());
    TrainClsResult result;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        write_meta(out_dir, "train-cls", cfg, seed, threads, model.store.total_parameters());
    }

    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        const double lr = cosine_lr(epoch, tc.epochs, tc.warmup_epochs, tc.lr, tc.lr_min_frac);
        const auto order = epoch_order(data.train.size(), seed, epoch);
        std::int64_t in_batch = 0;
        opt.zero_grads();
        for (std::size_t oi = 0; oi < order.size(); ++oi) {
            const std::size_t si = order[oi];
            PointCloud pc = normalize(data.train[si].cloud);
            Rng aug_rng(derive_seed(seed, 0x617567ULL + static_cast<std::uint64_t>(epoch), si));
            if (tc.augment) augment_cloud(pc, tc, aug_rng);
            canonical_order(pc);
            ScalePyramid pyr = build_pyramid(pc, cfg.model.scale_sizes, cfg.model.ks, 0);
            tape().clear();
            Tensor logits = classify_logits(model, pyr);
            Tensor loss = softmax_cross_entropy(logits, data.train[si].label);
            abort_on_nonfinite(loss.item());
            backward(mul_scalar(loss, 1.0 / static_cast<double>(tc.batch_size)));
            tape().clear();
            ++in_batch;
            if (in_batch == tc.batch_size || oi + 1 == order.size()) {
                opt.step(lr, tc.weight_decay);
                opt.zero_grads();
                in_batch = 0;
            }
        }
        EpochAccuracy acc;
        acc.epoch = epoch + 1;
        acc.train_acc = evaluate_accuracy(model, data.train, threads);
        acc.test_acc = evaluate_accuracy(model, data.test, threads);
        result.accuracy.push_back(acc);
        if (!out_dir.empty()) write_acc_csv(out_dir + "/acc.csv", result.accuracy);
        if (tc.stop_train_acc > 0.0 && acc.train_acc >= tc.stop_train_acc &&
            result.epochs_to_target < 0) {
            result.epochs_to_target = epoch + 1;
            break;
        }
    }

    if (!out_dir.empty()) {
        result.checkpoint_path = out_dir + "/cls_checkpoint.prwk";
        save_checkpoint(model.store, result.checkpoint_path);
    }
    return result;
}

}  // namespace prwkv
