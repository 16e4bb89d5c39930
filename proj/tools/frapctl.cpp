#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "frap/frap.h"

namespace {

struct Options {
    std::string config;
    std::string out;
    std::string checkpoint;
    std::string method = "fixedtime,formula,sotl";
    std::string op = "flip";
    std::string flow_out;
    long long seed = -1;
    bool sync = false;
    bool retrain = false;
};

void print_line(const char* line, void*) { std::printf("%s\n", line); std::fflush(stdout); }

int report(frap_status s)
{
    if (s != FRAP_OK) std::fprintf(stderr, "error (%s): %s\n", frap_status_name(s), frap_last_error());
    return static_cast<int>(s);
}

// Loads the config file and applies command-line overrides.
frap_status open_experiment(const Options& o, frap_experiment** exp)
{
    frap_status s = frap_experiment_load(o.config.c_str(), exp);
    if (s != FRAP_OK) return s;
    if (o.seed >= 0 && (s = frap_experiment_set_seed(*exp, static_cast<uint64_t>(o.seed))) != FRAP_OK) return s;
    if (!o.out.empty() && (s = frap_experiment_set_out_dir(*exp, o.out.c_str())) != FRAP_OK) return s;
    if (o.sync && (s = frap_experiment_set_sync(*exp, 1)) != FRAP_OK) return s;
    return frap_experiment_set_log(*exp, print_line, nullptr);
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Traffic signal control experiments"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "Override the config seed")->check(CLI::NonNegativeNumber);
        sub->add_option("--out", o.out, "Override the output directory");
    };
    auto* train = app.add_subcommand("train", "Train the configured learned agent");
    common(train);
    train->add_flag("--sync", o.sync, "Deterministic single-threaded schedule");
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint greedily");
    common(eval);
    eval->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
    auto* compare = app.add_subcommand("compare", "Run several methods on the same flow");
    common(compare);
    compare->add_option("--method", o.method, "Comma-separated methods: frap,vanilla,fixedtime,formula,sotl");
    compare->add_flag("--sync", o.sync, "Deterministic schedule for learned methods");
    auto* transfer = app.add_subcommand("transfer", "Evaluate a checkpoint on a mirrored flow");
    common(transfer);
    transfer->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
    transfer->add_option("--op", o.op, "Symmetry")->check(CLI::IsMember({"flip", "rot90", "rot180", "rot270"}));
    transfer->add_flag("--retrain", o.retrain, "Also train from scratch on the mirrored flow");
    transfer->add_flag("--sync", o.sync, "Deterministic schedule for retraining");
    auto* gen = app.add_subcommand("gen-flow", "Write the evaluation flow as CSV");
    common(gen);
    gen->add_option("flow", o.flow_out, "Output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    frap_experiment* exp = nullptr;
    frap_status s = open_experiment(o, &exp);
    if (s == FRAP_OK) {
        if (*train) {
            double best = 0;
            s = frap_cmd_train(exp, &best);
            if (s == FRAP_OK) std::printf("best_travel_time %.6g\n", best);
        } else if (*eval) {
            double tt = 0;
            int64_t exited = 0;
            s = frap_cmd_eval(exp, o.checkpoint.c_str(), &tt, &exited);
        } else if (*compare) {
            s = frap_cmd_compare(exp, o.method.c_str());
        } else if (*transfer) {
            double a = 0, b = 0;
            s = frap_cmd_transfer(exp, o.checkpoint.c_str(), o.op.c_str(), o.retrain ? 1 : 0, &a, &b);
        } else if (*gen) {
            s = frap_cmd_gen_flow(exp, o.flow_out.c_str());
        }
    }
    frap_experiment_destroy(exp);
    return report(s);
}
