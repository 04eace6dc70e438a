#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "dgnerf/field.hpp"

namespace dgnerf {

/// Flat key-value config: one `key value` pair per line, `#` comments,
/// and an `include <path>` directive resolved relative to the including
/// file. Later keys override earlier ones.
class Config {
  public:
    Config() = default;

    static Config from_file(const std::string& path) {
        Config cfg;
        cfg.load(path, 0);
        return cfg;
    }

    static Config from_string(const std::string& text) {
        Config cfg;
        std::istringstream in(text);
        cfg.parse(in, ".", 0);
        return cfg;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t pos = 0;
            double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument(key);
            return v;
        } catch (const std::exception&) {
            throw InputError("config: bad numeric value for " + key + ": " + it->second);
        }
    }

    long get_long(const std::string& key, long fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stol(it->second);
        } catch (const std::exception&) {
            throw InputError("config: bad integer value for " + key + ": " + it->second);
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "on" || it->second == "true" || it->second == "1") return true;
        if (it->second == "off" || it->second == "false" || it->second == "0") return false;
        throw InputError("config: bad boolean value for " + key + ": " + it->second);
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    const std::map<std::string, std::string>& entries() const { return values_; }

    std::string snapshot() const {
        std::ostringstream out;
        for (const auto& [k, v] : values_) out << k << " " << v << "\n";
        return out.str();
    }

  private:
    void load(const std::string& path, int depth) {
        if (depth > 8) throw InputError("config: include depth exceeded at " + path);
        std::ifstream in(path);
        if (!in) throw InputError("config: cannot open " + path);
        parse(in, std::filesystem::path(path).parent_path().string(), depth);
    }

    void parse(std::istream& in, const std::string& base_dir, int depth) {
        std::string line;
        while (std::getline(in, line)) {
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::istringstream ls(line);
            std::string key, value;
            if (!(ls >> key)) continue;
            std::getline(ls, value);
            const auto start = value.find_first_not_of(" \t");
            value = start == std::string::npos ? "" : value.substr(start);
            const auto last = value.find_last_not_of(" \t\r");
            if (last != std::string::npos) value.erase(last + 1);
            if (key == "include") {
                std::filesystem::path p(value);
                if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
                load(p.string(), depth + 1);
            } else {
                values_[key] = value;
            }
        }
    }

    std::map<std::string, std::string> values_;
};

/// Map config keys onto the trainer settings; unknown keys are ignored
/// so scene settings can share the file.
inline TrainConfig train_config_from(const Config& cfg) {
    TrainConfig t;
    if (cfg.get("profile", "") == "paper") t = paper_profile();
    t.rays_per_batch = int(cfg.get_long("rays_per_batch", t.rays_per_batch));
    t.n_coarse = int(cfg.get_long("n_coarse", t.n_coarse));
    t.n_fine = int(cfg.get_long("n_fine", t.n_fine));
    t.n_emd_samples = int(cfg.get_long("n_emd_samples", t.n_emd_samples));
    t.lr = cfg.get_double("lr", t.lr);
    t.lr_final = cfg.get_double("lr_final", t.lr_final);
    t.lr_drop_fraction = cfg.get_double("lr_drop_fraction", t.lr_drop_fraction);
    t.steps = int(cfg.get_long("steps", t.steps));
    t.weight_decay = cfg.get_double("weight_decay", t.weight_decay);
    t.loss_weights.lambda = cfg.get_double("lambda", t.loss_weights.lambda);
    t.loss_weights.gamma = cfg.get_double("gamma", t.loss_weights.gamma);
    t.depth_loss = parse_depth_loss(cfg.get("loss", "emd"));
    const auto mode = cfg.get("emd_mode", "exact");
    if (mode == "exact") t.emd_mode = EmdMode::Exact;
    else if (mode == "sinkhorn") t.emd_mode = EmdMode::Sinkhorn;
    else throw InputError("config: emd_mode must be exact or sinkhorn");
    t.transport.blur = cfg.get_double("blur", t.transport.blur);
    t.transport.scaling = cfg.get_double("sinkhorn_scaling", t.transport.scaling);
    t.transport.max_iters = int(cfg.get_long("sinkhorn_max_iters", t.transport.max_iters));
    t.transport.tolerance = cfg.get_double("sinkhorn_tolerance", t.transport.tolerance);
    t.transport.cost_exponent = cfg.get_double("cost_exponent", t.transport.cost_exponent);
    t.use_uncertainty = cfg.get_bool("uncertainty", t.use_uncertainty);
    t.emd_from_fine = cfg.get_bool("emd_from_fine", t.emd_from_fine);
    t.u_on_coarse = cfg.get_bool("u_on_coarse", t.u_on_coarse);
    t.use_hypotheses = cfg.get_bool("use_hypotheses", t.use_hypotheses);
    t.warmup_fraction = cfg.get_double("warmup_fraction", t.warmup_fraction);
    t.depth_grad_clip = cfg.get_double("depth_grad_clip", t.depth_grad_clip);
    t.midpoint_quantiles = cfg.get_bool("midpoint_quantiles", t.midpoint_quantiles);
    t.empty_epsilon = cfg.get_double("empty_epsilon", t.empty_epsilon);
    t.scale_lr = cfg.get_double("scale_lr", t.scale_lr);
    if (!cfg.has("seed")) throw InputError("config: seed is mandatory");
    t.seed = std::uint64_t(cfg.get_long("seed", 0));
    t.mlp.pos_levels = int(cfg.get_long("pos_levels", t.mlp.pos_levels));
    t.mlp.dir_levels = int(cfg.get_long("dir_levels", t.mlp.dir_levels));
    t.mlp.trunk_layers = int(cfg.get_long("trunk_layers", t.mlp.trunk_layers));
    t.mlp.width = int(cfg.get_long("width", t.mlp.width));
    t.mlp.dropout_p = cfg.get_double("dropout_p", t.mlp.dropout_p);
    t.validate();
    return t;
}

}  // namespace dgnerf
