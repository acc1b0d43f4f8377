// drct: train / eval / infer / diagnose entry point.
//
// One JSON run-config plus flag overrides; every run directory receives the
// exact effective config so results can be reproduced bit-for-bit.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "drct/data/image_io.hpp"
#include "drct/diag/trace.hpp"
#include "drct/eval/benchmark.hpp"
#include "drct/train/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace drct;

namespace {

struct CliError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void log_event(const std::string& event, const json& fields) {
    json j = fields;
    j["event"] = event;
    std::cout << j.dump() << "\n" << std::flush;
}

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

struct RunConfig {
    model::ModelConfig model;
    train::StagePlan plan;
    std::string data_root;      // default corpus for stages without their own
    std::string val_root;
    std::string out_dir = "runs/default";
    uint64_t seed = 0;
    int hr_patch = 64;
    int batch_size = 1;
    int64_t val_interval = 500;
    int64_t checkpoint_interval = 1000;
    int64_t log_interval = 50;
    std::string cache_dir;

    json to_json() const;
};

void apply_model_json(model::ModelConfig& m, const json& j) {
    if (j.contains("scale")) m.scale = j["scale"];
    if (j.contains("embed_dim")) m.embed_dim = j["embed_dim"];
    if (j.contains("num_rdg")) m.num_rdg = j["num_rdg"];
    if (j.contains("sdrcb_per_rdg")) m.sdrcb_per_rdg = j["sdrcb_per_rdg"];
    if (j.contains("growth")) m.growth = j["growth"];
    if (j.contains("num_heads")) m.num_heads = j["num_heads"];
    if (j.contains("window_size")) m.window_size = j["window_size"];
    if (j.contains("mlp_ratio")) m.mlp_ratio = j["mlp_ratio"];
    if (j.contains("alpha")) m.alpha = j["alpha"];
    if (j.contains("leaky_slope")) m.leaky_slope = j["leaky_slope"];
    if (j.contains("img_range")) m.img_range = j["img_range"];
    if (j.contains("subtract_mean")) m.subtract_mean = j["subtract_mean"];
    if (j.contains("transition_3x3")) m.transition_3x3 = j["transition_3x3"];
    if (j.contains("identity_init")) m.identity_init = j["identity_init"];
}

json model_to_json(const model::ModelConfig& m) {
    return {{"scale", m.scale},
            {"embed_dim", m.embed_dim},
            {"num_rdg", m.num_rdg},
            {"sdrcb_per_rdg", m.sdrcb_per_rdg},
            {"growth", m.growth},
            {"num_heads", m.num_heads},
            {"window_size", m.window_size},
            {"mlp_ratio", m.mlp_ratio},
            {"alpha", m.alpha},
            {"leaky_slope", m.leaky_slope},
            {"img_range", m.img_range},
            {"subtract_mean", m.subtract_mean},
            {"transition_3x3", m.transition_3x3},
            {"identity_init", m.identity_init}};
}

train::StageId stage_id_from_string(const std::string& s) {
    if (s == "pretrain") return train::StageId::pretrain;
    if (s == "l1_finetune") return train::StageId::l1_finetune;
    if (s == "l2_polish") return train::StageId::l2_polish;
    throw CliError("config key 'stages[].id': unknown stage '" + s + "'");
}

train::LossKind loss_from_string(const std::string& s) {
    if (s == "l1") return train::LossKind::l1;
    if (s == "l2") return train::LossKind::l2;
    throw CliError("config key 'stages[].loss': unknown loss '" + s + "'");
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CliError("config file not readable: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw CliError("config parse failure in " + path + ": " + e.what());
    }
    RunConfig rc;
    if (j.contains("model")) apply_model_json(rc.model, j["model"]);
    if (j.contains("seed")) rc.seed = j["seed"];
    if (j.contains("out_dir")) rc.out_dir = j["out_dir"];
    if (j.contains("data_root")) rc.data_root = j["data_root"];
    if (j.contains("val_root")) rc.val_root = j["val_root"];
    if (j.contains("hr_patch")) rc.hr_patch = j["hr_patch"];
    if (j.contains("batch_size")) rc.batch_size = j["batch_size"];
    if (j.contains("val_interval")) rc.val_interval = j["val_interval"];
    if (j.contains("checkpoint_interval")) rc.checkpoint_interval = j["checkpoint_interval"];
    if (j.contains("log_interval")) rc.log_interval = j["log_interval"];
    if (j.contains("cache_dir")) rc.cache_dir = j["cache_dir"];
    if (j.contains("stages")) {
        for (const auto& sj : j["stages"]) {
            train::StageSpec s;
            if (!sj.contains("id")) throw CliError("config key 'stages[].id' missing");
            s.id = stage_id_from_string(sj["id"]);
            if (sj.contains("loss")) s.loss = loss_from_string(sj["loss"]);
            if (!sj.contains("total_iters"))
                throw CliError("config key 'stages[].total_iters' must be explicit");
            s.total_iters = sj["total_iters"];
            if (sj.contains("base_lr")) s.base_lr = sj["base_lr"];
            s.milestones = sj.contains("milestones")
                               ? sj["milestones"].get<std::vector<double>>()
                               : train::default_milestone_fractions();
            if (sj.contains("corpus_root")) s.corpus_root = sj["corpus_root"];
            rc.plan.stages.push_back(std::move(s));
        }
    }
    return rc;
}

json RunConfig::to_json() const {
    json stages = json::array();
    for (const auto& s : plan.stages)
        stages.push_back({{"id", train::stage_name(s.id)},
                          {"loss", s.loss == train::LossKind::l1 ? "l1" : "l2"},
                          {"total_iters", s.total_iters},
                          {"base_lr", s.base_lr},
                          {"milestones", s.milestones},
                          {"corpus_root", s.corpus_root}});
    return {{"model", model_to_json(model)},
            {"stages", std::move(stages)},
            {"seed", seed},
            {"out_dir", out_dir},
            {"data_root", data_root},
            {"val_root", val_root},
            {"hr_patch", hr_patch},
            {"batch_size", batch_size},
            {"val_interval", val_interval},
            {"checkpoint_interval", checkpoint_interval},
            {"log_interval", log_interval},
            {"cache_dir", cache_dir}};
}

void echo_effective_config(const RunConfig& rc) {
    fs::create_directories(rc.out_dir);
    std::ofstream out(fs::path(rc.out_dir) / "effective_config.json");
    out << rc.to_json().dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// shared helpers
// ---------------------------------------------------------------------------

/// In-memory pair cache: desk corpora are small, so keep decoded pairs.
class PairCache {
public:
    const data::ImagePair& get(const data::ManifestEntry& e) {
        auto it = cache_.find(e.hr_path);
        if (it == cache_.end())
            it = cache_.emplace(e.hr_path, data::load_pair(e)).first;
        return it->second;
    }

private:
    std::map<std::string, data::ImagePair> cache_;
};

Tensor<float> stack_batch(const std::vector<data::ImagePair>& patches, bool hr) {
    const auto& first = hr ? patches.front().hr : patches.front().lr;
    const int C = first.dim(1), H = first.dim(2), W = first.dim(3);
    Tensor<float> out({static_cast<int>(patches.size()), C, H, W});
    int64_t off = 0;
    for (const auto& p : patches) {
        const auto& t = hr ? p.hr : p.lr;
        std::copy(t.vec().begin(), t.vec().end(), out.vec().begin() + off);
        off += t.numel();
    }
    return out;
}

double validate_psnr(const model::Drct<float>& net, const data::DatasetManifest& val,
                     PairCache& cache) {
    NoGradGuard ng;
    double acc = 0;
    int n = 0;
    for (const auto& e : val.entries) {
        const auto& pair = cache.get(e);
        auto sr = net.forward(pair.lr);
        acc += eval::psnr(sr->value, pair.hr, 2 * net.config().scale);
        ++n;
    }
    return n ? acc / n : 0.0;
}

model::Drct<float> load_model(const std::string& checkpoint) {
    auto peek = model::peek_checkpoint(checkpoint);
    model::Drct<float> net(peek.config, peek.meta.seed);
    (void)model::load_checkpoint(checkpoint, net.params());
    return net;
}

eval::SrFn make_sr_fn(const model::Drct<float>& net, bool tta) {
    eval::SrFn plain = [&net](const Tensor<float>& lr) {
        NoGradGuard ng;
        return net.forward(lr)->value;
    };
    if (!tta) return plain;
    return [plain](const Tensor<float>& lr) { return eval::self_ensemble(plain, lr); };
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

int cmd_train(const RunConfig& rc_in, const std::string& resume_path) {
    RunConfig rc = rc_in;
    rc.plan.validate();
    rc.model.validate();
    if (rc.hr_patch % rc.model.scale != 0)
        throw CliError("config key 'hr_patch': must be divisible by model.scale");
    echo_effective_config(rc);

    model::Drct<float> net(rc.model, rc.seed);
    train::Trainer<float> trainer(net, rc.plan, rc.seed);
    if (!resume_path.empty()) {
        trainer.resume(resume_path);
        log_event("resume", {{"checkpoint", resume_path},
                             {"iteration", trainer.iteration()},
                             {"stage", train::stage_name(trainer.stage().id)}});
    }
    log_event("train_start", {{"parameters", net.count_parameters()},
                              {"seed", rc.seed},
                              {"out_dir", rc.out_dir}});

    PairCache cache;
    std::optional<data::DatasetManifest> val;
    if (!rc.val_root.empty())
        val = data::scan_dataset(rc.val_root, rc.model.scale, data::Split::val,
                                 rc.cache_dir);

    int64_t global_step = 0;
    while (true) {
        const auto& stage = trainer.stage();
        const std::string corpus =
            stage.corpus_root.empty() ? rc.data_root : stage.corpus_root;
        if (corpus.empty())
            throw CliError("config key 'data_root': no corpus for stage " +
                           std::string(train::stage_name(stage.id)));
        auto manifest =
            data::scan_dataset(corpus, rc.model.scale, data::Split::train, rc.cache_dir);
        if (manifest.entries.empty())
            throw CliError("config key 'data_root': no HR images under " + corpus);
        log_event("stage_start", {{"stage", train::stage_name(stage.id)},
                                  {"total_iters", stage.total_iters},
                                  {"base_lr", stage.base_lr},
                                  {"corpus", corpus},
                                  {"images", manifest.entries.size()}});

        data::PatchSpec patch{rc.hr_patch, rc.model.scale};
        data::AugmentationSpec aug;
        aug.seed = rc.seed;
        while (!trainer.stage_exhausted()) {
            std::vector<data::ImagePair> batch;
            int64_t attempt = 0;
            while (static_cast<int>(batch.size()) < rc.batch_size) {
                const auto& entry = manifest.entries[static_cast<size_t>(
                    (global_step * rc.batch_size + attempt) % manifest.entries.size())];
                auto rng = data::rng_for_sample(rc.seed, global_step * 1000 + attempt);
                ++attempt;
                if (attempt > 100 * rc.batch_size)
                    throw CliError("data_root: every image smaller than hr_patch");
                auto sample = data::sample_patch(cache.get(entry), patch, aug, rng);
                if (sample) batch.push_back(std::move(*sample));
            }
            const float loss =
                trainer.train_step(stack_batch(batch, false), stack_batch(batch, true));
            ++global_step;
            if (trainer.iteration() % rc.log_interval == 0 || trainer.stage_exhausted())
                log_event("step", {{"stage", train::stage_name(stage.id)},
                                   {"iter", trainer.iteration()},
                                   {"loss", loss},
                                   {"lr", trainer.current_lr()}});
            if (val && trainer.iteration() % rc.val_interval == 0) {
                const double p = validate_psnr(net, *val, cache);
                const bool best = p > trainer.best_val_psnr();
                trainer.note_val_psnr(p);
                log_event("validation", {{"iter", trainer.iteration()},
                                         {"psnr", p},
                                         {"best", trainer.best_val_psnr()}});
                if (best)
                    trainer.save_checkpoint(
                        (fs::path(rc.out_dir) / "best.ckpt").string());
            }
            if (trainer.iteration() % rc.checkpoint_interval == 0)
                trainer.save_checkpoint((fs::path(rc.out_dir) / "last.ckpt").string());
        }
        trainer.save_checkpoint(
            (fs::path(rc.out_dir) /
             ("stage_" + std::string(train::stage_name(stage.id)) + ".ckpt"))
                .string());
        if (!trainer.advance_stage()) break;
    }
    trainer.save_checkpoint((fs::path(rc.out_dir) / "final.ckpt").string());
    log_event("train_done", {{"best_val_psnr", trainer.best_val_psnr()}});
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset, bool tta,
             const std::string& out_dir, const std::string& cache_dir) {
    auto net = load_model(checkpoint);
    auto manifest =
        data::scan_dataset(dataset, net.config().scale, data::Split::test, cache_dir);
    if (manifest.entries.empty()) throw CliError("dataset: no HR images under " + dataset);
    auto report = eval::run_benchmark(make_sr_fn(net, tta), manifest,
                                      net.config().scale, tta);
    fs::create_directories(out_dir);
    {
        std::ofstream js(fs::path(out_dir) / "report.json");
        js << report.to_json() << "\n";
        std::ofstream tx(fs::path(out_dir) / "report.txt");
        tx << report.to_table();
    }
    std::cout << report.to_table();
    log_event("eval_done", {{"mean_psnr", report.mean_psnr},
                            {"mean_ssim", report.mean_ssim},
                            {"images", report.per_image.size()},
                            {"skipped", report.skipped.size()},
                            {"tta", tta}});
    return report.skipped.empty() ? 0 : 2;
}

int cmd_infer(const std::string& checkpoint, const std::vector<std::string>& inputs,
              bool tta, const std::string& out_dir) {
    auto net = load_model(checkpoint);
    auto sr_fn = make_sr_fn(net, tta);
    fs::create_directories(out_dir);
    int failures = 0;
    for (const auto& in : inputs) {
        try {
            auto lr = data::read_png(in);
            auto sr = sr_fn(lr);
            const auto out = fs::path(out_dir) /
                             (fs::path(in).stem().string() + "_x" +
                              std::to_string(net.config().scale) + ".png");
            data::write_png(out.string(), sr);
            log_event("infer", {{"input", in},
                                {"output", out.string()},
                                {"lr", {lr.dim(3), lr.dim(2)}},
                                {"sr", {sr.dim(3), sr.dim(2)}}});
        } catch (const std::exception& e) {
            ++failures;
            log_event("infer_error", {{"input", in}, {"message", e.what()}});
        }
    }
    return failures == 0 ? 0 : 2;
}

int cmd_diagnose(const std::string& checkpoint, const std::string& input,
                 const std::string& tap_level, const std::string& out_dir) {
    auto net = load_model(checkpoint);
    model::TapLevel level;
    if (tap_level == "per_rdg") level = model::TapLevel::per_rdg;
    else if (tap_level == "per_sdrcb") level = model::TapLevel::per_sdrcb;
    else if (tap_level == "per_stage") level = model::TapLevel::per_stage;
    else throw CliError("--tap-level: expected per_rdg|per_sdrcb|per_stage");

    auto lr = data::read_png(input);
    auto trace = diag::record_trace(net, lr, level, fs::path(input).stem().string());
    fs::create_directories(out_dir);
    const auto trace_path = (fs::path(out_dir) / "trace.json").string();
    const auto chart_path = (fs::path(out_dir) / "trace.png").string();
    diag::export_trace(trace, trace_path);
    diag::render_trace_chart({trace}, chart_path);
    log_event("diagnose", {{"input", input},
                           {"tap_level", tap_level},
                           {"taps", trace.taps.size()},
                           {"g_index", diag::g_index(trace)},
                           {"parameters", net.count_parameters()},
                           {"trace", trace_path},
                           {"chart", chart_path}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DRCT single-image super-resolution"};
    app.require_subcommand(1);

    std::string config_path, checkpoint, resume_path, cache_dir;
    std::string train_out, eval_out = "eval_out", infer_out = "infer_out",
                diag_out = "diag_out";
    std::string dataset, input, tap_level = "per_rdg";
    std::vector<std::string> inputs;
    bool tta = false;
    std::optional<uint64_t> seed_override;
    std::optional<int> scale_override;

    auto* train_cmd = app.add_subcommand("train", "run the progressive training plan");
    train_cmd->add_option("--config", config_path, "run config JSON")->required();
    train_cmd->add_option("--seed", seed_override, "override config seed");
    train_cmd->add_option("--scale", scale_override, "override model scale");
    train_cmd->add_option("--out", train_out, "override output directory");
    train_cmd->add_option("--resume", resume_path, "checkpoint to resume from");

    auto* eval_cmd = app.add_subcommand("eval", "benchmark a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    eval_cmd->add_option("--data", dataset, "dataset root (HR/ layout)")->required();
    eval_cmd->add_option("--out", eval_out, "report directory");
    eval_cmd->add_option("--cache-dir", cache_dir, "manifest cache directory");
    eval_cmd->add_flag("--tta", tta, "x8 self-ensemble");

    auto* infer_cmd = app.add_subcommand("infer", "super-resolve PNG image(s)");
    infer_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    infer_cmd->add_option("--input", inputs, "input PNG(s)")->required();
    infer_cmd->add_option("--out", infer_out, "output directory");
    infer_cmd->add_flag("--tta", tta, "x8 self-ensemble");

    auto* diag_cmd = app.add_subcommand("diagnose", "feature-intensity trace + chart");
    diag_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    diag_cmd->add_option("--input", input, "input PNG")->required();
    diag_cmd->add_option("--tap-level", tap_level, "per_rdg|per_sdrcb|per_stage");
    diag_cmd->add_option("--out", diag_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) {
            RunConfig rc = load_run_config(config_path);
            if (seed_override) rc.seed = *seed_override;
            if (scale_override) rc.model.scale = *scale_override;
            if (!train_out.empty()) rc.out_dir = train_out;
            if (!cache_dir.empty()) rc.cache_dir = cache_dir;
            return cmd_train(rc, resume_path);
        }
        if (eval_cmd->parsed()) return cmd_eval(checkpoint, dataset, tta, eval_out, cache_dir);
        if (infer_cmd->parsed()) return cmd_infer(checkpoint, inputs, tta, infer_out);
        if (diag_cmd->parsed()) return cmd_diagnose(checkpoint, input, tap_level, diag_out);
    } catch (const std::exception& e) {
        log_event("error", {{"message", e.what()}});
        return 1;
    }
    return 1;
}
