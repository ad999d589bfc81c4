// Command-line front end. All real work happens behind the C API in
// libmrct; this file only parses flags, merges them over the config file
// and maps status codes to the documented exit codes.
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mrct.h"

using json = nlohmann::json;

namespace {

constexpr const char* kOutRootEnv = "MRCT_OUT_ROOT";

int exit_code_of(mrct_status st) {
    switch (st) {
        case MRCT_OK: return 0;
        case MRCT_E_IO: return 1;
        case MRCT_E_INVALID: return 2;
        case MRCT_E_NUMERIC: return 3;
        case MRCT_E_INTERNAL: return 4;
    }
    return 4;
}

int fail(mrct_status st) {
    std::fprintf(stderr, "error: %s\n", mrct_last_error());
    return exit_code_of(st);
}

std::string seed_hex(std::uint64_t seed) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(seed));
    return buf;
}

// Reads the config file (empty doc when none) so flag overrides can be
// merged in before the document is handed to the library.
struct ConfigDoc {
    json doc = json::object();

    // 0 = fine, else exit code
    int load(const std::string& path) {
        if (path.empty()) return 0;
        std::ifstream f(path);
        if (!f) {
            std::fprintf(stderr, "error: cannot read config file %s\n", path.c_str());
            return 1;
        }
        std::ostringstream ss;
        ss << f.rdbuf();
        doc = json::parse(ss.str(), nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) {
            std::fprintf(stderr, "error: %s is not a JSON object\n", path.c_str());
            return 2;
        }
        return 0;
    }

    std::string dump() const { return doc.dump(); }

    // Section accessor for flag merging; looking a section up must not leave
    // a JSON null behind when no flag ends up writing to it.
    json& section(const char* key) {
        json& s = doc[key];
        if (s.is_null()) s = json::object();
        return s;
    }
};

// --out resolution: an explicit path wins; otherwise $MRCT_OUT_ROOT/<name>.
int resolve_out(std::string& out, const std::string& subcommand) {
    if (!out.empty()) return 0;
    if (const char* root = std::getenv(kOutRootEnv); root && *root) {
        out = std::string(root) + "/" + subcommand;
        return 0;
    }
    std::fprintf(stderr, "error: --out is required (or set %s)\n", kOutRootEnv);
    return 2;
}

void print_report_file(const std::string& path, const char* heading) {
    std::ifstream f(path);
    if (!f) return; // reporting is best-effort; the artifact is the contract
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) return;
    std::printf("%s\n", heading);
    std::printf("%s\n", j.dump(2).c_str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"mrct — phantom MR/CT translation: data generation, training, evaluation"};
    app.require_subcommand(1);
    app.footer("Exit codes: 0 ok, 1 I/O failure, 2 invalid arguments or config,\n"
               "3 numeric failure (NaN abort), 4 internal error.\n"
               "MRCT_OUT_ROOT provides a default root for --out.");

    std::string config_path, data_path, out_dir, model, checkpoint, resume;
    std::optional<int> n_paired, n_ct, resolution, epochs, iters, batch_size;
    std::optional<std::uint64_t> seed;
    std::optional<double> air_fraction, eval_fraction;
    bool self_check = false;

    CLI::App* gen = app.add_subcommand("gen-data", "Generate a phantom dataset with manifest");
    gen->add_option("--config", config_path, "Run-config JSON file");
    gen->add_option("--n-paired", n_paired, "Number of paired MR/MRCAT cases");
    gen->add_option("--n-ct", n_ct, "Number of unpaired CT cases");
    gen->add_option("--resolution", resolution, "Image side length in pixels");
    gen->add_option("--seed", seed, "Master seed");
    gen->add_option("--air-fraction", air_fraction, "Fraction of CT cases with an air cavity");
    gen->add_option("--eval-fraction", eval_fraction, "Trailing fraction held out for eval");
    gen->add_option("--out", out_dir, "Output dataset directory");

    CLI::App* tr = app.add_subcommand("train", "Train a translation model");
    tr->add_option("--model", model, "pixmc | pixcm | baseline")
        ->check(CLI::IsMember({"pixmc", "pixcm", "baseline"}));
    tr->add_option("--config", config_path, "Run-config JSON file");
    tr->add_option("--data", data_path, "Dataset manifest.json")->required();
    tr->add_option("--out", out_dir, "Output run directory");
    tr->add_option("--resume", resume, "Checkpoint to continue from");
    tr->add_option("--epochs", epochs, "Override train.epochs");
    tr->add_option("--iters-per-epoch", iters, "Override train.iters_per_epoch");
    tr->add_option("--batch-size", batch_size, "Override train.batch_size");
    tr->add_option("--seed", seed, "Override train.seed");

    CLI::App* ev = app.add_subcommand("evaluate", "Score a checkpoint on the eval split");
    ev->add_option("--checkpoint", checkpoint, "Trained checkpoint file");
    ev->add_option("--config", config_path, "Run-config JSON file");
    ev->add_option("--data", data_path, "Dataset manifest.json")->required();
    ev->add_option("--out", out_dir, "Output report directory");
    ev->add_flag("--self-check", self_check,
                 "Score the identity translator instead of a checkpoint (fid ~ 0 expected)");

    CLI::App* ab = app.add_subcommand("ablate", "Train and compare the objective variants");
    ab->add_option("--model", model, "pixmc | pixcm")
        ->check(CLI::IsMember({"pixmc", "pixcm"}))
        ->required();
    ab->add_option("--config", config_path, "Run-config JSON file");
    ab->add_option("--data", data_path, "Dataset manifest.json")->required();
    ab->add_option("--out", out_dir, "Output directory (one sub-directory per variant)");
    ab->add_option("--seed", seed, "Override train.seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    ConfigDoc cfg;
    if (int rc = cfg.load(config_path); rc != 0) return rc;

    if (gen->parsed()) {
        if (int rc = resolve_out(out_dir, "dataset"); rc != 0) return rc;
        json& d = cfg.section("data");
        if (n_paired) d["n_paired"] = *n_paired;
        if (n_ct) d["n_unpaired_ct"] = *n_ct;
        if (resolution) d["resolution"] = *resolution;
        if (seed) d["seed"] = seed_hex(*seed);
        if (air_fraction) d["air_fraction"] = *air_fraction;
        if (eval_fraction) d["eval_fraction"] = *eval_fraction;
        mrct_status st = mrct_gen_data(cfg.dump().c_str(), out_dir.c_str());
        if (st != MRCT_OK) return fail(st);
        std::printf("dataset written to %s\n", out_dir.c_str());
        return 0;
    }

    if (tr->parsed()) {
        if (int rc = resolve_out(out_dir, "train"); rc != 0) return rc;
        json& t = cfg.section("train");
        if (epochs) t["epochs"] = *epochs;
        if (iters) t["iters_per_epoch"] = *iters;
        if (batch_size) t["batch_size"] = *batch_size;
        if (seed) t["seed"] = seed_hex(*seed);
        mrct_status st = mrct_train_run(cfg.dump().c_str(), model.empty() ? nullptr : model.c_str(),
                                        data_path.c_str(), out_dir.c_str(),
                                        resume.empty() ? nullptr : resume.c_str());
        if (st != MRCT_OK) return fail(st);
        print_report_file(out_dir + "/train_report.json", "training finished:");
        return 0;
    }

    if (ev->parsed()) {
        if (int rc = resolve_out(out_dir, "evaluate"); rc != 0) return rc;
        if (!self_check && checkpoint.empty()) {
            std::fprintf(stderr, "error: --checkpoint is required unless --self-check is given\n");
            return 2;
        }
        mrct_status st = mrct_evaluate_run(cfg.dump().c_str(),
                                           checkpoint.empty() ? nullptr : checkpoint.c_str(),
                                           data_path.c_str(), out_dir.c_str(), self_check ? 1 : 0);
        if (st != MRCT_OK) return fail(st);
        print_report_file(out_dir + "/metric_report.json", "evaluation finished:");
        return 0;
    }

    if (ab->parsed()) {
        if (int rc = resolve_out(out_dir, "ablate"); rc != 0) return rc;
        if (seed) cfg.doc["train"]["seed"] = seed_hex(*seed);
        mrct_status st = mrct_ablate_run(cfg.dump().c_str(), model.c_str(), data_path.c_str(),
                                         out_dir.c_str());
        if (st != MRCT_OK) return fail(st);
        print_report_file(out_dir + "/ablate_report.json", "ablation finished:");
        return 0;
    }

    return 2; // unreachable: a subcommand is required
}
