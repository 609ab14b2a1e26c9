#include "lbsf/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "lbsf/behavior_data.hpp"
#include "lbsf/checkpoint.hpp"
#include "lbsf/config.hpp"
#include "lbsf/error.hpp"
#include "lbsf/evaluation.hpp"
#include "lbsf/nn/gradcheck.hpp"
#include "lbsf/synthetic.hpp"
#include "lbsf/training.hpp"
#include "lbsf/version.hpp"

namespace lbsf::cli {

using nlohmann::json;

namespace {

struct Options {
    std::string config;
    std::string data;
    std::string model;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::optional<int> days;
};

RunConfig effective_config(const Options& o) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
    if (o.workers) {
        cfg.train.workers = *o.workers;
    }
    cfg.validate();
    return cfg;
}

json provenance(const std::string& command, const json& config) {
    return {{"tool_version", kToolVersion}, {"command", command}, {"config", config}};
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw Error("cannot open '" + path + "' for writing");
    }
    return f;
}

// Writes to --out when given, otherwise to `fallback`.
template <class Fn>
void emit(const std::string& path, std::ostream& fallback, Fn fn) {
    if (path.empty()) {
        fn(fallback);
        return;
    }
    auto f = open_out(path);
    fn(f);
    if (!f) {
        throw Error("failed writing '" + path + "'");
    }
}

Dataset load_nonempty(const std::string& path) {
    Dataset d = load_jsonl(path);
    if (d.empty()) {
        throw EmptyDatasetError();
    }
    return d;
}

json checkpoint_config(const LoadedCheckpoint& ck, const RunConfig& run) {
    json j = ck.config;
    j["eval"] = run.to_json()["eval"];
    return j;
}

int cmd_generate(const Options& o, std::ostream& err) {
    RunConfig cfg = effective_config(o);
    if (o.seed) {
        cfg.synth.seed = *o.seed;
    }
    if (o.days) {
        cfg.synth.t_span_days = *o.days;
    }
    cfg.synth.validate();
    const Dataset d = generate_synthetic(cfg.synth);
    const json meta = provenance("generate", cfg.to_json());
    auto f = open_out(o.out);
    write_jsonl(f, d, &meta);
    err << "generated " << d.size() << " users (" << d.positives() << " positive) -> " << o.out << '\n';
    return 0;
}

int cmd_train(const Options& o, std::ostream& err) {
    RunConfig cfg = effective_config(o);
    if (o.seed) {
        cfg.train.seed = *o.seed;
    }
    const Dataset all = load_nonempty(o.data);
    Dataset train_set = all;
    Dataset validation;
    if (cfg.eval.validation_fraction > 0.0) {
        auto parts = split_dataset(all, cfg.eval.validation_fraction, cfg.train.seed);
        train_set = std::move(parts.train);
        validation = std::move(parts.held_out);
        validation.split = Split::validation;
    }

    LbsfModel<float> model(cfg.model, cfg.train.seed);
    fit_model_statistics(model, train_set);

    const char* check = std::getenv("LBSF_CHECK_MODE");
    if (check != nullptr && std::string(check) == "1") {
        const nn::GradCheckResult r = gradient_check(model.cast<double>(), train_set);
        const double e = r.max_relative_error;
        err << "gradient check (float64): " << r.coordinates_checked << " coordinates, max relative error " << e
            << " at " << r.worst_parameter << "[" << r.worst_offset << "] analytic " << r.worst_analytic
            << " numeric " << r.worst_numeric << '\n';
        if (!(e < 1e-4)) {
            throw NumericError("gradient check failed: max relative error " + std::to_string(e));
        }
    }

    const TrainResult res = train(train_set, validation.empty() ? nullptr : &validation, model, cfg.train,
                                  [&](const EpochStats& s) {
                                      err << "epoch " << s.epoch << " loss " << s.mean_loss;
                                      if (s.validation_auc) {
                                          err << " val_auc " << *s.validation_auc;
                                      }
                                      err << '\n';
                                  });

    CheckpointMeta meta;
    meta.epoch = res.best_epoch;
    meta.seed = cfg.train.seed;
    for (const auto& h : res.history) {
        meta.loss_history.push_back(h.mean_loss);
    }
    meta.extra = provenance("train", cfg.to_json());
    save_checkpoint(model, o.out, meta);

    json log = provenance("train", cfg.to_json());
    auto epochs = json::array();
    for (const auto& h : res.history) {
        epochs.push_back({{"epoch", h.epoch},
                          {"mean_loss", h.mean_loss},
                          {"validation_auc", h.validation_auc ? json(*h.validation_auc) : json(nullptr)},
                          {"scored", h.scored},
                          {"skipped", h.skipped}});
    }
    log["epochs"] = std::move(epochs);
    log["best_epoch"] = res.best_epoch;
    auto f = open_out(o.out + ".log.json");
    f << log.dump(2) << '\n';
    err << "checkpoint -> " << o.out << '\n';
    return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
    const RunConfig cfg = effective_config(o);
    const LoadedCheckpoint ck = load_checkpoint(o.model);
    const Dataset d = load_nonempty(o.data);
    const EvalReport r = evaluate(d, ck.model, cfg.eval.recall_fraction, cfg.train.workers);
    json j = r.to_json();
    j["meta"] = provenance("eval", checkpoint_config(ck, cfg));
    emit(o.out, out, [&](std::ostream& s) { s << j.dump(2) << '\n'; });
    return 0;
}

int cmd_score(const Options& o, std::ostream& out) {
    const RunConfig cfg = effective_config(o);
    const LoadedCheckpoint ck = load_checkpoint(o.model);
    const Dataset d = load_nonempty(o.data);
    const auto users = score_dataset(d, ck.model, cfg.train.workers);
    emit(o.out, out, [&](std::ostream& s) {
        s << json{{"_meta", provenance("score", checkpoint_config(ck, cfg))}}.dump() << '\n';
        for (const auto& u : users) {
            json e{{"user_id", u.user_id},
                   {"probability", u.probability ? json(*u.probability) : json(nullptr)}};
            if (u.label) {
                e["label"] = *u.label;
            }
            s << e.dump() << '\n';
        }
    });
    return 0;
}

int cmd_explain(const Options& o, std::ostream& out) {
    const RunConfig cfg = effective_config(o);
    const LoadedCheckpoint ck = load_checkpoint(o.model);
    const Dataset d = load_nonempty(o.data);
    const auto recs = export_attributions(d, ck.model, cfg.eval.top_k_merchants, cfg.train.workers);
    json j;
    j["meta"] = provenance("explain", checkpoint_config(ck, cfg));
    j["records"] = json::array();
    for (const auto& r : recs) {
        j["records"].push_back(r.to_json());
    }
    emit(o.out, out, [&](std::ostream& s) { s << j.dump(2) << '\n'; });
    return 0;
}

int cmd_bench(const Options& o, std::ostream& out) {
    const RunConfig cfg = effective_config(o);
    BenchConfig bc;
    bc.d_model = cfg.model.d_model;
    bc.n_heads = cfg.model.n_heads;
    bc.ffn_hidden = cfg.model.ffn_hidden;
    bc.seed = o.seed.value_or(cfg.train.seed);
    const auto rows = bench_fold_vs_flat(cfg.eval.bench_t_values, cfg.eval.bench_merchants, cfg.eval.bench_trials, bc);
    emit(o.out, out, [&](std::ostream& s) {
        s << "# " << provenance("bench", cfg.to_json()).dump() << '\n';
        write_bench_csv(s, rows);
    });
    return 0;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Long-term payment behavior sequence folding: generate, train, evaluate, explain"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    Options o;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "TOML-style config file")->check(CLI::ExistingFile);
        sub->add_option("--workers", o.workers, "data-parallel worker threads")->check(CLI::PositiveNumber);
    };

    auto* gen = app.add_subcommand("generate", "write a synthetic labeled dataset as JSONL");
    add_common(gen);
    gen->add_option("--out", o.out, "output JSONL")->required();
    gen->add_option("--seed", o.seed, "generator seed");
    gen->add_option("--days", o.days, "window span in days")->check(CLI::IsMember({45, 90, 180}));

    auto* tr = app.add_subcommand("train", "train a model and write a checkpoint");
    add_common(tr);
    tr->add_option("--data", o.data, "training JSONL")->required()->check(CLI::ExistingFile);
    tr->add_option("--out", o.out, "checkpoint path")->required();
    tr->add_option("--seed", o.seed, "training seed");

    auto* ev = app.add_subcommand("eval", "AUC and recall on a labeled dataset");
    add_common(ev);
    ev->add_option("--data", o.data, "labeled JSONL")->required()->check(CLI::ExistingFile);
    ev->add_option("--model", o.model, "checkpoint")->required()->check(CLI::ExistingFile);
    ev->add_option("--out", o.out, "report JSON (default stdout)");

    auto* sc = app.add_subcommand("score", "per-user default probabilities");
    add_common(sc);
    sc->add_option("--data", o.data, "JSONL")->required()->check(CLI::ExistingFile);
    sc->add_option("--model", o.model, "checkpoint")->required()->check(CLI::ExistingFile);
    sc->add_option("--out", o.out, "output JSONL (default stdout)");

    auto* ex = app.add_subcommand("explain", "merchant attention attributions");
    add_common(ex);
    ex->add_option("--data", o.data, "JSONL")->required()->check(CLI::ExistingFile);
    ex->add_option("--model", o.model, "checkpoint")->required()->check(CLI::ExistingFile);
    ex->add_option("--out", o.out, "output JSON (default stdout)");

    auto* be = app.add_subcommand("bench", "folded vs flat attention cost");
    add_common(be);
    be->add_option("--out", o.out, "output CSV (default stdout)");
    be->add_option("--seed", o.seed, "model seed");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion& e) {
        out << kToolVersion << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n' << app.help();
        return 2;
    }

    try {
        if (*gen) {
            return cmd_generate(o, err);
        }
        if (*tr) {
            return cmd_train(o, err);
        }
        if (*ev) {
            return cmd_eval(o, out);
        }
        if (*sc) {
            return cmd_score(o, out);
        }
        if (*ex) {
            return cmd_explain(o, out);
        }
        return cmd_bench(o, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

} // namespace lbsf::cli
