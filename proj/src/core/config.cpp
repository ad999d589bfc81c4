#include "core/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "core/errors.hpp"
#include "core/hashutil.hpp"

using json = nlohmann::json;

namespace mrct {

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& why) {
    throw_invalid_config("config: " + path + ": " + why);
}

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) bad(path, "expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) bad(path + "." + it.key(), "unknown key");
    }
}

int get_int(const json& obj, const std::string& path, const char* key, int fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) bad(path + "." + key, "expected an integer");
    return v.get<int>();
}

double get_num(const json& obj, const std::string& path, const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) bad(path + "." + key, "expected a number");
    return v.get<double>();
}

bool get_bool(const json& obj, const std::string& path, const char* key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_boolean()) bad(path + "." + key, "expected a boolean");
    return v.get<bool>();
}

std::string get_str(const json& obj, const std::string& path, const char* key,
                    const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_string()) bad(path + "." + key, "expected a string");
    return v.get<std::string>();
}

// Seeds are written as "0x..." strings (JSON numbers lose 64-bit precision)
// but plain non-negative integers are accepted too.
std::uint64_t get_seed(const json& obj, const std::string& path, const char* key,
                       std::uint64_t fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
        auto i = v.get<std::int64_t>();
        if (i < 0) bad(path + "." + key, "seed must be non-negative");
        return static_cast<std::uint64_t>(i);
    }
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        try {
            std::size_t pos = 0;
            std::uint64_t out = std::stoull(s, &pos, 0);
            if (pos != s.size()) bad(path + "." + key, "not a valid seed: " + s);
            return out;
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            bad(path + "." + key, "not a valid seed: " + s);
        }
    }
    bad(path + "." + key, "expected an integer or a \"0x...\" string");
}

std::string seed_hex(std::uint64_t seed) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(seed));
    return buf;
}

void parse_data(const json& obj, GenerateConfig& out) {
    check_keys(obj, "data",
               {"n_paired", "n_unpaired_ct", "resolution", "seed", "air_fraction", "eval_fraction"});
    out.n_paired = get_int(obj, "data", "n_paired", out.n_paired);
    out.n_unpaired_ct = get_int(obj, "data", "n_unpaired_ct", out.n_unpaired_ct);
    out.resolution = get_int(obj, "data", "resolution", out.resolution);
    out.master_seed = get_seed(obj, "data", "seed", out.master_seed);
    out.air_fraction = get_num(obj, "data", "air_fraction", out.air_fraction);
    out.eval_fraction = get_num(obj, "data", "eval_fraction", out.eval_fraction);
}

void parse_objective(const json& obj, ObjectiveConfig& out) {
    check_keys(obj, "train.objective", {"gan_mode", "lambda_l1", "terms"});
    out.gan_mode = get_str(obj, "train.objective", "gan_mode", out.gan_mode);
    out.lambda_l1 = get_num(obj, "train.objective", "lambda_l1", out.lambda_l1);
    if (obj.contains("terms")) {
        const json& t = obj.at("terms");
        if (!t.is_array()) bad("train.objective.terms", "expected an array");
        out.term_gan = out.term_cgan = out.term_l1 = false;
        for (const json& e : t) {
            if (!e.is_string()) bad("train.objective.terms", "expected strings");
            std::string s = e.get<std::string>();
            if (s == "GAN") out.term_gan = true;
            else if (s == "cGAN") out.term_cgan = true;
            else if (s == "L1") out.term_l1 = true;
            else bad("train.objective.terms", "unknown term: " + s + " (known: GAN, cGAN, L1)");
        }
    }
}

void parse_augment(const json& obj, AugmentConfig& out) {
    check_keys(obj, "train.augment", {"enabled", "hflip_prob", "zoom_min", "zoom_max", "crop_size"});
    out.enabled = get_bool(obj, "train.augment", "enabled", out.enabled);
    out.hflip_prob = get_num(obj, "train.augment", "hflip_prob", out.hflip_prob);
    out.zoom_min = get_num(obj, "train.augment", "zoom_min", out.zoom_min);
    out.zoom_max = get_num(obj, "train.augment", "zoom_max", out.zoom_max);
    out.crop_size = get_int(obj, "train.augment", "crop_size", out.crop_size);
}

void parse_train(const json& obj, TrainConfig& out) {
    check_keys(obj, "train",
               {"model", "epochs", "iters_per_epoch", "batch_size", "base_width", "depth",
                "d_layers", "objective", "schedule", "adam", "augment", "seed", "checkpoint_every",
                "split"});
    if (obj.contains("model")) {
        out.model = model_kind_from_name(get_str(obj, "train", "model", ""));
        out.objective = default_objective(out.model); // objective defaults follow the model
    }
    out.epochs = get_int(obj, "train", "epochs", out.epochs);
    out.iters_per_epoch = get_int(obj, "train", "iters_per_epoch", out.iters_per_epoch);
    out.batch_size = get_int(obj, "train", "batch_size", out.batch_size);
    out.base_width = get_int(obj, "train", "base_width", out.base_width);
    out.depth = get_int(obj, "train", "depth", out.depth);
    out.d_layers = get_int(obj, "train", "d_layers", out.d_layers);
    if (obj.contains("objective")) parse_objective(obj.at("objective"), out.objective);
    if (obj.contains("schedule")) {
        const json& s = obj.at("schedule");
        check_keys(s, "train.schedule", {"base_lr", "constant_epochs", "decay_epochs"});
        out.schedule.base_lr = get_num(s, "train.schedule", "base_lr", out.schedule.base_lr);
        out.schedule.constant_epochs =
            get_int(s, "train.schedule", "constant_epochs", out.schedule.constant_epochs);
        out.schedule.decay_epochs =
            get_int(s, "train.schedule", "decay_epochs", out.schedule.decay_epochs);
    }
    if (obj.contains("adam")) {
        const json& a = obj.at("adam");
        check_keys(a, "train.adam", {"beta1", "beta2", "eps"});
        out.adam.beta1 = get_num(a, "train.adam", "beta1", out.adam.beta1);
        out.adam.beta2 = get_num(a, "train.adam", "beta2", out.adam.beta2);
        out.adam.eps = get_num(a, "train.adam", "eps", out.adam.eps);
    }
    if (obj.contains("augment")) parse_augment(obj.at("augment"), out.augment);
    out.seed = get_seed(obj, "train", "seed", out.seed);
    out.checkpoint_every = get_int(obj, "train", "checkpoint_every", out.checkpoint_every);
    out.split = get_str(obj, "train", "split", out.split);
}

void parse_eval(const json& obj, EvalConfig& out) {
    check_keys(obj, "eval", {"split", "embedding", "kid_block_size", "labels"});
    out.split = get_str(obj, "eval", "split", out.split);
    if (obj.contains("embedding")) {
        const json& e = obj.at("embedding");
        check_keys(e, "eval.embedding", {"seed", "dim", "weights_file"});
        out.embedding.seed = get_seed(e, "eval.embedding", "seed", out.embedding.seed);
        out.embedding.dim = get_int(e, "eval.embedding", "dim", out.embedding.dim);
        if (e.contains("weights_file") && !e.at("weights_file").is_null()) {
            if (!e.at("weights_file").is_string()) bad("eval.embedding.weights_file", "expected a string");
            out.embedding.weights_file = e.at("weights_file").get<std::string>();
        }
    }
    out.kid_block_size = get_int(obj, "eval", "kid_block_size", out.kid_block_size);
    if (obj.contains("labels")) {
        const json& l = obj.at("labels");
        if (!l.is_array() || l.empty()) bad("eval.labels", "expected a non-empty array");
        out.labels.clear();
        for (const json& e : l) {
            if (!e.is_number_integer()) bad("eval.labels", "expected integers");
            out.labels.push_back(e.get<int>());
        }
    }
}

} // namespace

RunConfig default_run_config(ModelKind model) {
    RunConfig cfg;
    cfg.train.model = model;
    cfg.train.objective = default_objective(model);
    cfg.train.augment.crop_size = cfg.data.resolution;
    return cfg;
}

RunConfig parse_run_config(const std::string& text, ModelKind default_model) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) throw_invalid_config("config: not valid JSON");
    RunConfig cfg = default_run_config(default_model);
    check_keys(doc, "$", {"version", "data", "train", "eval"});
    cfg.version = get_int(doc, "$", "version", cfg.version);
    if (cfg.version != 1)
        throw_invalid_config("config: unsupported version " + std::to_string(cfg.version));
    if (doc.contains("data")) parse_data(doc.at("data"), cfg.data);
    // the crop default follows the dataset resolution unless set explicitly
    cfg.train.augment.crop_size = cfg.data.resolution;
    if (doc.contains("train")) parse_train(doc.at("train"), cfg.train);
    if (doc.contains("eval")) parse_eval(doc.at("eval"), cfg.eval);
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, ModelKind default_model) {
    std::ifstream f(path);
    if (!f) throw_io_error("config: cannot read " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_run_config(ss.str(), default_model);
}

std::string run_config_json(const RunConfig& cfg) {
    json j;
    j["version"] = cfg.version;
    j["data"] = {{"n_paired", cfg.data.n_paired},
                 {"n_unpaired_ct", cfg.data.n_unpaired_ct},
                 {"resolution", cfg.data.resolution},
                 {"seed", seed_hex(cfg.data.master_seed)},
                 {"air_fraction", cfg.data.air_fraction},
                 {"eval_fraction", cfg.data.eval_fraction}};
    j["train"] = json::parse(train_config_json(cfg.train));
    json emb = {{"seed", seed_hex(cfg.eval.embedding.seed)}, {"dim", cfg.eval.embedding.dim}};
    emb["weights_file"] = cfg.eval.embedding.weights_file
                              ? json(cfg.eval.embedding.weights_file->generic_string())
                              : json(nullptr);
    j["eval"] = {{"split", cfg.eval.split},
                 {"embedding", emb},
                 {"kid_block_size", cfg.eval.kid_block_size},
                 {"labels", cfg.eval.labels}};
    return j.dump();
}

std::string run_config_hash(const RunConfig& cfg) { return fnv1a64_hex(run_config_json(cfg)); }

void validate_run_config(const RunConfig& cfg) {
    if (cfg.data.n_paired < 2) throw_invalid_config("config: data.n_paired must be >= 2");
    if (cfg.data.n_unpaired_ct < 0) throw_invalid_config("config: data.n_unpaired_ct must be >= 0");
    if (cfg.data.resolution < 32) throw_invalid_config("config: data.resolution must be >= 32");
    if (cfg.data.air_fraction < 0.0 || cfg.data.air_fraction > 1.0)
        throw_invalid_config("config: data.air_fraction must lie in [0,1]");
    if (cfg.data.eval_fraction < 0.0 || cfg.data.eval_fraction > 0.9)
        throw_invalid_config("config: data.eval_fraction must lie in [0,0.9]");
    validate_train_config(cfg.train);
    if (cfg.eval.split != "train" && cfg.eval.split != "eval" && cfg.eval.split != "all")
        throw_invalid_config("config: eval.split must be train, eval or all");
    if (cfg.eval.embedding.dim < 1) throw_invalid_config("config: eval.embedding.dim must be >= 1");
    if (cfg.eval.kid_block_size < 2) throw_invalid_config("config: eval.kid_block_size must be >= 2");
    if (cfg.eval.labels.empty()) throw_invalid_config("config: eval.labels must not be empty");
}

} // namespace mrct
