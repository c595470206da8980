// voterag: ensemble-voting RAG pipeline, Monte Carlo simulator, bound
// calculator and QA evaluator behind one executable.
//
// Exit codes: 0 success, 1 runtime/check failure, 2 usage or config error.

#include <voterag/config.hpp>
#include <voterag/version.hpp>

#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace voterag;

namespace {

struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> jobs;
};

std::string fmt(double v) { return detail::format_number(v); }

// write-then-rename so partial files never appear under the final name
void write_file_atomic(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out << content;
    }
    fs::rename(tmp, path);
}

RunConfig load_config(const GlobalOptions& global) {
    RunConfig config =
        global.config_path.empty() ? parse_run_config("{}") : load_run_config(global.config_path);
    if (global.out_dir) config.output.directory = *global.out_dir;
    if (global.seed) {
        config.sim.seed = *global.seed;
        config.pipeline.seed = *global.seed;
        config.agent.seed = *global.seed;
    }
    return config;
}

void write_run_metadata(const fs::path& out_dir, const GlobalOptions& global,
                        const std::string& command, std::uint64_t seed) {
    // no timestamps or worker counts here: seeded runs must be byte-identical
    nlohmann::json manifest = {{"tool", "voterag"},
                               {"version", VOTERAG_VERSION},
                               {"command", command},
                               {"seed", seed}};
    write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
    const std::string snapshot =
        global.config_path.empty() ? std::string("{}\n")
                                   : detail::read_text_file(global.config_path, "config");
    write_file_atomic(out_dir / "config_snapshot.json", snapshot);
}

void validate_grid(const GridSpec& grid) {
    for (int n : grid.n_agents)
        if (n < 1) throw ConfigError("grid: n_agents values must be >= 1");
    for (double p : grid.p)
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("grid: p values must lie in [0,1]");
    for (double rho : grid.rho)
        if (!(rho >= 0.0 && rho <= 1.0))
            throw ConfigError("grid: rho values must lie in [0,1]");
    for (double alpha : grid.alpha)
        if (!(alpha >= 0.0 && alpha <= 1.0))
            throw ConfigError("grid: alpha values must lie in [0,1]");
    for (double pc : grid.p_c)
        if (!(pc >= 0.0 && pc <= 1.0)) throw ConfigError("grid: p_c values must lie in [0,1]");
}

// ---------------------------------------------------------------------------
// bounds
// ---------------------------------------------------------------------------

int cmd_bounds(const GlobalOptions& global, const GridSpec& flag_grid, bool grid_from_flags) {
    RunConfig config = load_config(global);
    GridSpec grid = grid_from_flags ? flag_grid : config.sim.grid;
    if (grid.alpha.empty()) grid.alpha = {0.0};
    if (grid.p_c.empty()) grid.p_c = {0.0};
    validate_grid(grid);

    std::ostringstream csv;
    csv << "n_agents,p,rho,alpha,p_c,exact,hoeffding,chebyshev,p_eff,adv_threshold,reason\n";
    for (int n : grid.n_agents) {
        for (double p : grid.p) {
            for (double rho : grid.rho) {
                for (double alpha : grid.alpha) {
                    for (double pc : grid.p_c) {
                        const EnsembleSpec spec{n, p, rho};
                        std::string exact, hoeffding, chebyshev, p_eff, threshold;
                        std::vector<std::string> reasons;
                        if (rho == 0.0)
                            exact = fmt(exact_majority_error(spec));
                        else
                            reasons.push_back("exact: rho!=0");
                        if (rho != 0.0)
                            reasons.push_back("hoeffding: rho!=0");
                        else if (p >= 0.5)
                            reasons.push_back("hoeffding: p>=1/2");
                        else
                            hoeffding = fmt(hoeffding_bound(spec));
                        if (p >= 0.5)
                            reasons.push_back("chebyshev: p>=1/2");
                        else
                            chebyshev = fmt(chebyshev_correlated_bound(spec));
                        p_eff = fmt(effective_error({alpha, pc}));
                        if (pc < 1.0)
                            threshold = fmt(adversarial_threshold(pc));
                        else
                            reasons.push_back("adv_threshold: p_c>=1");

                        std::string reason;
                        for (const std::string& r : reasons) {
                            if (!reason.empty()) reason += "; ";
                            reason += r;
                        }
                        csv << n << ',' << fmt(p) << ',' << fmt(rho) << ',' << fmt(alpha)
                            << ',' << fmt(pc) << ',' << exact << ',' << hoeffding << ','
                            << chebyshev << ',' << p_eff << ',' << threshold << ','
                            << reason << '\n';
                    }
                }
            }
        }
    }

    const fs::path out_dir(config.output.directory);
    write_run_metadata(out_dir, global, "bounds", config.sim.seed);
    write_file_atomic(out_dir / "bounds.csv", csv.str());
    std::cerr << "bounds: wrote " << (out_dir / "bounds.csv").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const GlobalOptions& global) {
    RunConfig config = load_config(global);
    const GridSpec& grid = config.sim.grid;
    validate_grid(grid);
    const std::uint64_t trials = config.sim.trials;
    const std::uint64_t seed = config.sim.seed;
    const int jobs = global.jobs.value_or(1);
    if (jobs < 1) throw ConfigError("--jobs must be >= 1");

    std::vector<SweepRow> rows;
    std::uint64_t row_index = 0;
    auto next_row_seed = [&row_index, seed]() {
        return mix64(seed ^ mix64(0x726f772d73656564ULL + ++row_index));
    };

    for (int n : grid.n_agents) {
        for (double p : grid.p) {
            for (double rho : grid.rho) {
                SimConfig sim;
                sim.ensemble = EnsembleSpec{n, p, rho};
                sim.trials = trials;
                sim.seed = next_row_seed();
                rows.push_back(make_sweep_row(sim, jobs));
            }
        }
    }
    // adversarial rows: grid.alpha x grid.p_c, independent agents
    for (int n : grid.n_agents) {
        for (double alpha : grid.alpha) {
            for (double pc : grid.p_c) {
                SimConfig sim;
                sim.ensemble = EnsembleSpec{n, pc, 0.0};
                sim.adversarial = AdversarialSpec{alpha, pc};
                sim.trials = trials;
                sim.seed = next_row_seed();
                rows.push_back(make_sweep_row(sim, jobs));
            }
        }
    }

    std::ostringstream csv;
    write_sweep_csv(csv, rows);

    // containment checks: every closed-form bound must sit above its estimate
    std::ostringstream summary;
    int violations = 0;
    bool collapse_observed = false;
    bool above_threshold_present = false;
    for (const SweepRow& row : rows) {
        const double est = row.estimate.point_estimate;
        const double slack = 3.0 * row.estimate.standard_error;
        auto check = [&](const char* name, const std::optional<double>& bound) {
            if (!bound) return;
            const bool ok = est <= *bound + slack;
            if (!ok) ++violations;
            summary << (ok ? "pass" : "FAIL") << " containment " << name << " n=" << row.n_agents
                    << " p=" << fmt(row.p) << " rho=" << fmt(row.rho) << ": estimate "
                    << fmt(est) << " vs bound " << fmt(*bound) << "\n";
        };
        check("hoeffding", row.hoeffding);
        check("chebyshev", row.chebyshev);
        if (row.adversarial) {
            const double threshold =
                adversarial_threshold(row.adversarial->competent_error);
            if (row.adversarial->adversary_fraction > threshold) {
                above_threshold_present = true;
                if (est > 0.5) collapse_observed = true;
            }
        }
    }
    if (above_threshold_present && collapse_observed)
        summary << "above-threshold collapse observed\n";
    summary << (violations == 0 ? "all containment checks passed\n"
                                : std::to_string(violations) + " containment violations\n");

    const fs::path out_dir(config.output.directory);
    write_run_metadata(out_dir, global, "simulate", seed);
    write_file_atomic(out_dir / "sweep.csv", csv.str());
    write_file_atomic(out_dir / "summary.txt", summary.str());
    std::cerr << summary.str();
    std::cerr << "simulate: wrote " << (out_dir / "sweep.csv").string() << "\n";
    return violations == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

int cmd_run(const GlobalOptions& global, const std::string& dataset_flag,
            const std::string& mode_flag) {
    RunConfig config = load_config(global);
    if (!dataset_flag.empty()) config.eval.dataset = dataset_flag;
    if (!mode_flag.empty()) config.pipeline.mode = mode_from_string(mode_flag);
    if (config.eval.dataset.empty())
        throw ConfigError("run: a dataset is required (eval.dataset or --dataset)");

    std::ifstream dataset_in(config.eval.dataset);
    if (!dataset_in) throw ConfigError("cannot open dataset '" + config.eval.dataset + "'");
    const std::vector<EvalExample> dataset = load_dataset_jsonl(dataset_in);
    if (dataset.empty()) throw ConfigError("dataset is empty");

    BuiltBackends built = build_backends(config, &dataset);
    const Backends backends = built.get();

    int jobs = global.jobs.value_or(1);
    if (jobs < 1) throw ConfigError("--jobs must be >= 1");
    if (!backends.agent->supports_concurrent_calls() ||
        !backends.retriever->supports_concurrent_calls())
        jobs = 1;  // serialize for backends that cannot take concurrent calls

    std::vector<RunReport> reports(dataset.size());
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= dataset.size()) return;
            const EvalExample& ex = dataset[i];
            const Question question{ex.id, ex.question, ex.gold_answers};
            reports[i] = config.pipeline.mode == PipelineMode::naive_rag
                             ? run_naive_rag(question, config.pipeline, backends)
                             : run_vote_rag(question, config.pipeline, backends);
            const std::size_t finished = done.fetch_add(1) + 1;
            std::fprintf(stderr, "[%zu/%zu] %s %s (llm_calls=%d)\n", finished, dataset.size(),
                         ex.id.c_str(), reports[i].failed() ? "ERROR" : "ok",
                         reports[i].llm_calls);
        }
    };
    if (jobs > 1) {
        std::vector<std::thread> workers;
        for (int w = 0; w < jobs; ++w) workers.emplace_back(worker);
        for (auto& t : workers) t.join();
    } else {
        worker();
    }

    std::ostringstream jsonl;
    std::size_t failures = 0;
    for (const RunReport& report : reports) {
        if (report.failed()) ++failures;
        jsonl << to_json(report).dump() << '\n';
    }

    const fs::path out_dir(config.output.directory);
    write_run_metadata(out_dir, global, "run", config.pipeline.seed);
    write_file_atomic(out_dir / "reports.jsonl", jsonl.str());
    std::cerr << "run: " << (reports.size() - failures) << "/" << reports.size()
              << " questions succeeded, wrote " << (out_dir / "reports.jsonl").string() << "\n";
    return failures == reports.size() ? 1 : 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const GlobalOptions& global, const std::string& reports_flag,
             const std::string& dataset_flag) {
    RunConfig config = load_config(global);
    if (!dataset_flag.empty()) config.eval.dataset = dataset_flag;
    if (config.eval.dataset.empty())
        throw ConfigError("eval: a dataset is required (eval.dataset or --dataset)");
    const fs::path out_dir(config.output.directory);
    const std::string reports_path =
        reports_flag.empty() ? (out_dir / "reports.jsonl").string() : reports_flag;

    std::ifstream dataset_in(config.eval.dataset);
    if (!dataset_in) throw ConfigError("cannot open dataset '" + config.eval.dataset + "'");
    const std::vector<EvalExample> dataset = load_dataset_jsonl(dataset_in);

    std::ifstream reports_in(reports_path);
    if (!reports_in) throw ConfigError("cannot open reports '" + reports_path + "'");
    std::map<std::pair<std::string, int>, std::vector<PredictedAnswer>> groups;
    std::string line;
    std::size_t n_reports = 0;
    while (std::getline(reports_in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        RunReport report;
        try {
            report = report_from_json(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("reports line " + std::to_string(n_reports + 1) + ": " +
                              e.what());
        }
        ++n_reports;
        groups[{to_string(report.mode), report.n_agents}].push_back(to_prediction(report));
    }
    if (n_reports == 0) throw ConfigError("eval: reports file is empty");

    // ids must match the dataset in both directions
    std::set<std::string> dataset_ids;
    for (const EvalExample& ex : dataset) dataset_ids.insert(ex.id);
    for (const auto& [key, predictions] : groups)
        for (const PredictedAnswer& p : predictions)
            if (!dataset_ids.count(p.id))
                throw ConfigError("eval: report id '" + p.id + "' not present in dataset");

    const std::string dataset_name = fs::path(config.eval.dataset).stem().string();
    std::ostringstream metrics, long_table, per_example;
    metrics << "dataset,mode,n_agents,em,f1,n\n";
    long_table << "n_agents,mode,em,f1\n";
    for (const auto& [key, predictions] : groups) {
        MetricReport report = evaluate_run(predictions, dataset);  // throws on missing ids
        metrics << dataset_name << ',' << key.first << ',' << key.second << ','
                << fmt(report.em) << ',' << fmt(report.f1) << ',' << report.n_examples << '\n';
        long_table << key.second << ',' << key.first << ',' << fmt(report.em) << ','
                   << fmt(report.f1) << '\n';
        for (const ExampleScore& score : report.per_example) {
            per_example << nlohmann::json{{"id", score.id},
                                          {"mode", key.first},
                                          {"n_agents", key.second},
                                          {"em", score.em},
                                          {"f1", score.f1}}
                               .dump()
                        << '\n';
        }
    }

    write_run_metadata(out_dir, global, "eval", config.sim.seed);
    write_file_atomic(out_dir / "metrics.csv", metrics.str());
    write_file_atomic(out_dir / "metrics_by_n.csv", long_table.str());
    write_file_atomic(out_dir / "per_example.jsonl", per_example.str());
    std::cerr << metrics.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ensemble-voting RAG: pipeline, simulator, bounds and evaluation"};
    app.set_version_flag("--version", VOTERAG_VERSION);
    app.require_subcommand(1);

    GlobalOptions global;
    std::uint64_t seed_value = 0;
    std::string out_value;
    int jobs_value = 1;
    app.add_option("--config", global.config_path, "config file (JSON with comments)");
    auto* seed_opt = app.add_option("--seed", seed_value, "override every configured seed");
    auto* out_opt = app.add_option("--out", out_value, "output directory");
    auto* jobs_opt = app.add_option("--jobs", jobs_value, "worker threads");

    GridSpec flag_grid;
    bool any_grid_flag = false;
    auto* bounds = app.add_subcommand("bounds", "closed-form error bounds over a grid");
    auto* bn = bounds->add_option("--n-agents", flag_grid.n_agents, "ensemble sizes")
                   ->delimiter(',');
    auto* bp = bounds->add_option("--p", flag_grid.p, "error rates")->delimiter(',');
    auto* br = bounds->add_option("--rho", flag_grid.rho, "pairwise correlations")
                   ->delimiter(',');
    auto* ba = bounds->add_option("--alpha", flag_grid.alpha, "adversary fractions")
                   ->delimiter(',');
    auto* bc = bounds->add_option("--p-c", flag_grid.p_c, "competent error rates")
                   ->delimiter(',');

    auto* simulate = app.add_subcommand("simulate", "Monte Carlo sweep with bound checks");

    std::string dataset_flag, mode_flag, reports_flag;
    auto* run = app.add_subcommand("run", "run the pipeline over a dataset");
    run->add_option("--dataset", dataset_flag, "dataset JSON-lines file");
    run->add_option("--mode", mode_flag, "vote_rag or naive_rag");

    auto* eval = app.add_subcommand("eval", "score reports against a dataset");
    eval->add_option("--reports", reports_flag, "reports JSON-lines file");
    eval->add_option("--dataset", dataset_flag, "dataset JSON-lines file");

    for (CLI::App* sub : {bounds, simulate, run, eval}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (*seed_opt) global.seed = seed_value;
    if (*out_opt) global.out_dir = out_value;
    if (*jobs_opt) global.jobs = jobs_value;
    any_grid_flag = *bn || *bp || *br || *ba || *bc;

    try {
        if (*bounds) return cmd_bounds(global, flag_grid, any_grid_flag);
        if (*simulate) return cmd_simulate(global);
        if (*run) return cmd_run(global, dataset_flag, mode_flag);
        if (*eval) return cmd_eval(global, reports_flag, dataset_flag);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
