#include "prwkv/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace prwkv {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw std::invalid_argument("config: bad boolean for \"" + key + "\": " + v);
}

template <typename T>
std::vector<T> parse_list(const std::string& v) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(static_cast<T>(std::stod(item)));
    }
    return out;
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                        ": expected \"key = value\"");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        ModelConfig& m = cfg.model;
        TrainConfig& t = cfg.train;
        if (key == "scales") m.scale_sizes = parse_list<std::int64_t>(value);
        else if (key == "ks") m.ks = parse_list<int>(value);
        else if (key == "width") m.width = std::stoi(value);
        else if (key == "heads") m.heads = std::stoi(value);
        else if (key == "pe_hidden") m.pe_hidden = std::stoi(value);
        else if (key == "d_lora") m.d_lora = std::stoi(value);
        else if (key == "hidden_ratio") m.hidden_ratio = std::stoi(value);
        else if (key == "blocks") m.blocks_per_stage = parse_list<int>(value);
        else if (key == "decoder_blocks") m.decoder_blocks_per_stage = parse_list<int>(value);
        else if (key == "mask_ratio") m.mask_ratio = std::stod(value);
        else if (key == "lgm_radius") m.lgm_radius = parse_list<double>(value);
        else if (key == "lgm_iterations") m.lgm_iterations = std::stoi(value);
        else if (key == "lgm_tied") m.lgm_tied = parse_bool(value, key);
        else if (key == "lgm_mean_aggregate") m.lgm_mean_aggregate = parse_bool(value, key);
        else if (key == "use_lgm") m.use_lgm = parse_bool(value, key);
        else if (key == "use_stabilizer") m.use_stabilizer = parse_bool(value, key);
        else if (key == "use_bqe") m.use_bqe = parse_bool(value, key);
        else if (key == "bqe_lerp") m.bqe_lerp = parse_bool(value, key);
        else if (key == "bqe_grid2d") m.bqe_grid2d = parse_bool(value, key);
        else if (key == "bidirectional") m.bidirectional = parse_bool(value, key);
        else if (key == "classes") m.classes = std::stoi(value);
        else if (key == "epochs") t.epochs = std::stoi(value);
        else if (key == "batch_size") t.batch_size = std::stoi(value);
        else if (key == "lr") t.lr = std::stod(value);
        else if (key == "weight_decay") t.weight_decay = std::stod(value);
        else if (key == "warmup_epochs") t.warmup_epochs = std::stoi(value);
        else if (key == "lr_min_frac") t.lr_min_frac = std::stod(value);
        else if (key == "points") t.points = std::stoi(value);
        else if (key == "train_per_class") t.train_per_class = std::stoi(value);
        else if (key == "test_per_class") t.test_per_class = std::stoi(value);
        else if (key == "pretrain_samples") t.pretrain_samples = std::stoi(value);
        else if (key == "jitter") t.jitter = std::stod(value);
        else if (key == "augment") t.augment = parse_bool(value, key);
        else if (key == "resample_masks") t.resample_masks = parse_bool(value, key);
        else if (key == "aug_scale_lo") t.aug_scale_lo = std::stod(value);
        else if (key == "aug_scale_hi") t.aug_scale_hi = std::stod(value);
        else if (key == "aug_translate") t.aug_translate = std::stod(value);
        else if (key == "stop_train_acc") t.stop_train_acc = std::stod(value);
        else if (key == "init_checkpoint") t.init_checkpoint = value;
        else if (key == "checkpoint") t.checkpoint = value;
        else
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                        ": unknown config key \"" + key + "\"");
    }
    cfg.model.validate();
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str(), path);
}

namespace {

template <typename T>
std::string join(const std::vector<T>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << ",";
        os << v[i];
    }
    return os.str();
}

}  // namespace

std::string config_to_string(const RunConfig& cfg) {
    const ModelConfig& m = cfg.model;
    const TrainConfig& t = cfg.train;
    std::ostringstream os;
    os << "scales = " << join(m.scale_sizes) << "\n";
    os << "ks = " << join(m.ks) << "\n";
    os << "width = " << m.width << "\n";
    os << "heads = " << m.heads << "\n";
    os << "pe_hidden = " << m.pe_hidden << "\n";
    os << "d_lora = " << m.d_lora << "\n";
    os << "hidden_ratio = " << m.hidden_ratio << "\n";
    os << "blocks = " << join(m.blocks_per_stage) << "\n";
    os << "decoder_blocks = " << join(m.decoder_blocks_per_stage) << "\n";
    os << "mask_ratio = " << m.mask_ratio << "\n";
    os << "lgm_radius = " << join(m.lgm_radius) << "\n";
    os << "lgm_iterations = " << m.lgm_iterations << "\n";
    os << "lgm_tied = " << (m.lgm_tied ? "true" : "false") << "\n";
    os << "lgm_mean_aggregate = " << (m.lgm_mean_aggregate ? "true" : "false") << "\n";
    os << "use_lgm = " << (m.use_lgm ? "true" : "false") << "\n";
    os << "use_stabilizer = " << (m.use_stabilizer ? "true" : "false") << "\n";
    os << "use_bqe = " << (m.use_bqe ? "true" : "false") << "\n";
    os << "bqe_lerp = " << (m.bqe_lerp ? "true" : "false") << "\n";
    os << "bqe_grid2d = " << (m.bqe_grid2d ? "true" : "false") << "\n";
    os << "bidirectional = " << (m.bidirectional ? "true" : "false") << "\n";
    os << "classes = " << m.classes << "\n";
    os << "epochs = " << t.epochs << "\n";
    os << "batch_size = " << t.batch_size << "\n";
    os << "lr = " << t.lr << "\n";
    os << "weight_decay = " << t.weight_decay << "\n";
    os << "warmup_epochs = " << t.warmup_epochs << "\n";
    os << "lr_min_frac = " << t.lr_min_frac << "\n";
    os << "points = " << t.points << "\n";
    os << "train_per_class = " << t.train_per_class << "\n";
    os << "test_per_class = " << t.test_per_class << "\n";
    os << "pretrain_samples = " << t.pretrain_samples << "\n";
    os << "jitter = " << t.jitter << "\n";
    os << "augment = " << (t.augment ? "true" : "false") << "\n";
    os << "resample_masks = " << (t.resample_masks ? "true" : "false") << "\n";
    os << "aug_scale_lo = " << t.aug_scale_lo << "\n";
    os << "aug_scale_hi = " << t.aug_scale_hi << "\n";
    os << "aug_translate = " << t.aug_translate << "\n";
    os << "stop_train_acc = " << t.stop_train_acc << "\n";
    if (!t.init_checkpoint.empty()) os << "init_checkpoint = " << t.init_checkpoint << "\n";
    if (!t.checkpoint.empty()) os << "checkpoint = " << t.checkpoint << "\n";
    return os.str();
}

}  // namespace prwkv
