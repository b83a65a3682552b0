// ctg: synthetic fetal-heart-rate pipeline driver.
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctg/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string config;
    std::string out;
    std::string seed;     // empty = not overridden
    std::string threads;  // empty = not overridden
    std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config, "configuration file (key = value lines)");
    cmd->add_option("--out", a.out, "output directory")->required();
    cmd->add_option("--seed", a.seed, "override the run seed");
    cmd->add_option("--threads", a.threads, "worker threads (0 = all cores)");
    cmd->add_option("--set", a.sets, "override any config key, as key=value")
        ->take_all();
}

ctg::Overrides build_overrides(const CommonArgs& a) {
    ctg::Overrides ov;
    if (!a.seed.empty()) ov.emplace_back("seed", a.seed);
    if (!a.threads.empty()) ov.emplace_back("threads", a.threads);
    for (const auto& kv : a.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw std::invalid_argument("--set expects key=value, got: " + kv);
        ov.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return ov;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic fetal heart rate classification pipeline"};
    app.require_subcommand(1);

    CommonArgs synth_a, pre_a, feat_a, train_a, eval_a, sweep_a, interp_a;
    std::string pre_corpus;
    std::string feat_data, train_data, eval_data, sweep_data, interp_data;
    std::string eval_ckpt, interp_ckpt;
    std::string eval_corpus, eval_trace;
    std::string synth_n_npo, synth_n_apo, train_tc_target, train_max_epochs;
    std::string eval_bootstrap, interp_components, interp_steps;
    std::string sweep_targets, sweep_seeds;

    CLI::App* c_synth = app.add_subcommand("synth", "generate a synthetic corpus");
    add_common(c_synth, synth_a);
    c_synth->add_option("--n-npo", synth_n_npo, "normal-outcome record count");
    c_synth->add_option("--n-apo", synth_n_apo, "adverse-outcome record count");

    CLI::App* c_pre = app.add_subcommand("preprocess",
                                         "resample, denoise, segment, and split");
    add_common(c_pre, pre_a);
    c_pre->add_option("--corpus", pre_corpus, "corpus NDJSON file")->required();

    CLI::App* c_feat = app.add_subcommand("features", "compute segment features");
    add_common(c_feat, feat_a);
    c_feat->add_option("--data", feat_data, "preprocess output directory")->required();

    CLI::App* c_train = app.add_subcommand("train", "train the model");
    add_common(c_train, train_a);
    c_train->add_option("--data", train_data, "preprocess output directory")->required();
    c_train->add_option("--tc-target", train_tc_target, "total-correlation target");
    c_train->add_option("--max-epochs", train_max_epochs, "epoch limit");

    CLI::App* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    add_common(c_eval, eval_a);
    c_eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
    c_eval->add_option("--data", eval_data, "preprocess output directory")->required();
    c_eval->add_option("--corpus", eval_corpus, "corpus NDJSON (for --trace-ctg)");
    c_eval->add_option("--trace-ctg", eval_trace, "emit a timeline for this record");
    c_eval->add_option("--bootstrap-b", eval_bootstrap, "bootstrap resample count");

    CLI::App* c_sweep = app.add_subcommand("tc-sweep",
                                           "train across TC targets and seeds");
    add_common(c_sweep, sweep_a);
    c_sweep->add_option("--data", sweep_data, "preprocess output directory")->required();
    c_sweep->add_option("--tc-targets", sweep_targets, "comma list of TC targets");
    c_sweep->add_option("--sweep-seeds", sweep_seeds, "comma list of seeds");

    CLI::App* c_interp = app.add_subcommand("interpret", "latent-space analyses");
    add_common(c_interp, interp_a);
    c_interp->add_option("--checkpoint", interp_ckpt, "trained checkpoint")->required();
    c_interp->add_option("--data", interp_data, "preprocess output directory")->required();
    c_interp->add_option("--components", interp_components, "PCA/ICA component count");
    c_interp->add_option("--steps", interp_steps, "traversal step count");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_synth->parsed()) {
            auto ov = build_overrides(synth_a);
            if (!synth_n_npo.empty()) ov.emplace_back("synth.n_npo", synth_n_npo);
            if (!synth_n_apo.empty()) ov.emplace_back("synth.n_apo", synth_n_apo);
            ctg::cmd_synth(ctg::load_run_config(synth_a.config, ov), synth_a.out);
        } else if (c_pre->parsed()) {
            ctg::cmd_preprocess(ctg::load_run_config(pre_a.config, build_overrides(pre_a)),
                                pre_corpus, pre_a.out);
        } else if (c_feat->parsed()) {
            ctg::cmd_features(ctg::load_run_config(feat_a.config, build_overrides(feat_a)),
                              feat_data, feat_a.out);
        } else if (c_train->parsed()) {
            auto ov = build_overrides(train_a);
            if (!train_tc_target.empty()) ov.emplace_back("model.tc_target", train_tc_target);
            if (!train_max_epochs.empty()) ov.emplace_back("model.max_epochs", train_max_epochs);
            ctg::cmd_train(ctg::load_run_config(train_a.config, ov), train_data, train_a.out);
        } else if (c_eval->parsed()) {
            auto ov = build_overrides(eval_a);
            if (!eval_bootstrap.empty()) ov.emplace_back("eval.bootstrap_b", eval_bootstrap);
            ctg::cmd_eval(ctg::load_run_config(eval_a.config, ov), eval_ckpt, eval_data,
                          eval_a.out, eval_corpus, eval_trace);
        } else if (c_sweep->parsed()) {
            auto ov = build_overrides(sweep_a);
            if (!sweep_targets.empty()) ov.emplace_back("sweep.tc_targets", sweep_targets);
            if (!sweep_seeds.empty()) ov.emplace_back("sweep.seeds", sweep_seeds);
            ctg::cmd_tc_sweep(ctg::load_run_config(sweep_a.config, ov), sweep_data,
                              sweep_a.out);
        } else if (c_interp->parsed()) {
            auto ov = build_overrides(interp_a);
            if (!interp_components.empty())
                ov.emplace_back("interpret.components", interp_components);
            if (!interp_steps.empty()) ov.emplace_back("interpret.traverse_steps", interp_steps);
            ctg::cmd_interpret(ctg::load_run_config(interp_a.config, ov), interp_ckpt,
                               interp_data, interp_a.out);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
