#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <hcwalk/analysis.hpp>
#include <hcwalk/io.hpp>

namespace fs = std::filesystem;
using namespace hcwalk;

namespace {

enum Exit { ok = 0, validation_failure = 1, solver_failure = 2, io_failure = 3 };

struct Options {
    std::string env;
    std::string out;
    std::vector<double> eps;
    std::vector<double> t;
    std::size_t paths = 100000;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    double tolerance = 0.0;
    double T = 1.0;
    int grid = 128;
    std::vector<std::int64_t> start;
    bool limit = false;
    bool trajectories = false;
    std::string method = "cg";
    std::vector<std::string> functions{"paired"};
    double t2 = -1.0;
    double exact_budget = 5e6;
    std::string in;
};

IVec start_cell(PeriodicEnvironment const& env, Options const& o) {
    if (o.start.empty()) return default_start(env);
    if (o.start.size() != env.dim())
        throw ParameterError("--start needs " + std::to_string(env.dim()) + " comma-separated integers");
    return o.start;
}

void finish(RunManifest m, Options const& o) {
    m.outputs.push_back("manifest.json");
    write_json(fs::path(o.out) / "manifest.json", m.to_json());
}

int cmd_validate(Options const& o) {
    auto doc = read_json_file(o.env);
    auto rep = validate_document(doc);
    for (auto const& c : rep.checks)
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << (c.detail.empty() ? "" : ": " + c.detail) << "\n";
    for (auto const& w : rep.warnings) std::cout << "WARN " << w << "\n";
    if (!o.out.empty()) {
        json j;
        j["ok"] = rep.ok();
        json checks = json::array();
        for (auto const& c : rep.checks) checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
        j["checks"] = checks;
        j["warnings"] = rep.warnings;
        write_json(fs::path(o.out) / "validation.json", j);
        finish({"validate", o.env, json::object(), {"validation.json"}}, o);
    }
    return rep.ok() ? ok : validation_failure;
}

int cmd_solve(Options const& o) {
    auto env = load_environment_file(o.env);
    auto method = o.method == "direct" ? SingularMethod::pinned_direct : SingularMethod::conjugate_gradient;
    auto hom = homogenize(env, method);
    fs::path dir(o.out);
    write_json(dir / "model.json", model_to_json(env, hom));
    write_text(dir / "theta.csv", theta_csv(hom.model));
    write_text(dir / "rates.csv", rates_csv(hom.model));
    finish({"solve", o.env, {{"method", o.method}}, {"model.json", "theta.csv", "rates.csv"}}, o);
    std::cout << "eps_max " << fmt_double(env.eps_max) << "\n";
    for (std::size_t i = 0; i < hom.model.theta.size(); ++i) {
        std::cout << "theta fast:" << i + 1 << " =";
        for (Eigen::Index a = 0; a < hom.model.theta[i].size(); ++a)
            std::cout << " " << fmt_double(hom.model.theta[i](a));
        std::cout << "\n";
    }
    std::cout << "max residual " << fmt_double(hom.correctors.max_residual()) << ", max Fredholm defect "
              << fmt_double(hom.correctors.max_fredholm()) << "\n";
    return ok;
}

// endpoint rows "kind,eps,path,time,x1..xd,k"
void append_endpoints(std::string& s, std::vector<Trajectory> const& trajs, std::string const& kind, double eps) {
    for (std::size_t p = 0; p < trajs.size(); ++p) {
        auto const& tr = trajs[p];
        auto last = tr.size() - 1;
        s += kind + "," + (kind == "limit" ? std::string("0") : fmt_double(eps)) + "," + std::to_string(p) + "," +
             fmt_double(tr.times[last]);
        auto x = tr.position(last);
        for (Eigen::Index i = 0; i < x.size(); ++i) s += "," + fmt_double(x(i));
        s += "," + std::to_string(tr.labels[last]) + "\n";
    }
}

int cmd_simulate(Options const& o) {
    auto env = load_environment_file(o.env);
    if (o.eps.empty() && !o.limit) throw ParameterError("simulate needs --eps values, --limit, or both");
    if (!(o.T > 0.0)) throw ParameterError("--T must be positive");
    if (o.grid < 1) throw ParameterError("--grid must be at least 1");
    IVec z0 = start_cell(env, o);
    int const k0 = env.partition.flat(env.geometry.cell_of(z0));
    fs::path dir(o.out);
    RunManifest m{"simulate", o.env, {}, {}};
    m.parameters = {{"eps", o.eps},     {"T", o.T},           {"paths", o.paths}, {"seed", o.seed},
                    {"grid", o.grid},   {"start", z0},        {"limit", o.limit}, {"workers", o.workers},
                    {"trajectories", o.trajectories}};

    std::string endpoints = "kind,eps,path,time";
    for (std::size_t i = 0; i < env.dim(); ++i) endpoints += ",x" + std::to_string(i + 1);
    endpoints += ",k\n";

    for (std::size_t ei = 0; ei < o.eps.size(); ++ei) {
        WalkSampler walk(env, o.eps[ei]);
        std::vector<Trajectory> trajs(o.paths);
        parallel_for(o.paths, o.workers, [&](std::size_t p) {
            RngStream rng(o.seed, detail::stream_block(3, ei, 0, o.paths) + p);
            trajs[p] = run_walk(walk, o.T, z0, rng);
        });
        append_endpoints(endpoints, trajs, "micro", o.eps[ei]);
        if (o.trajectories) {
            auto name = "trajectories_eps_" + fmt_double(o.eps[ei]) + ".csv";
            write_text(dir / name, trajectories_csv(trajs));
            m.outputs.push_back(name);
        }
    }
    if (o.limit) {
        auto hom = homogenize(env);
        LimitSampler lim(hom.model);
        std::vector<Trajectory> trajs(o.paths);
        parallel_for(o.paths, o.workers, [&](std::size_t p) {
            RngStream rng(o.seed, detail::stream_block(4, 0, 0, o.paths) + p);
            trajs[p] = run_limit(lim, {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(env.dim())), k0}, o.T, rng, o.grid);
        });
        append_endpoints(endpoints, trajs, "limit", 0.0);
        if (o.trajectories) {
            write_text(dir / "trajectories_limit.csv", trajectories_csv(trajs));
            m.outputs.push_back("trajectories_limit.csv");
        }
    }
    write_text(dir / "endpoints.csv", endpoints);
    m.outputs.push_back("endpoints.csv");
    finish(m, o);
    std::cout << "wrote " << o.paths << " paths per run to " << dir.string() << "\n";
    return ok;
}

void apply_slack(ComparisonReport& rep, double slack) {
    for (auto& r : rep.rows) {
        r.tolerance += slack;
        r.within = r.discrepancy <= r.tolerance;
    }
    summarize_trends(rep);
}

int cmd_compare(Options const& o) {
    auto env = load_environment_file(o.env);
    if (o.eps.empty() || o.t.empty()) throw ParameterError("compare needs --eps and --t lists");
    if (o.tolerance < 0.0) throw ParameterError("--tolerance must be non-negative");
    auto hom = homogenize(env);
    auto const& m = hom.model;
    CompareOptions opt;
    opt.n_paths = o.paths;
    opt.seed = o.seed;
    opt.workers = o.workers;
    opt.exact_budget = o.exact_budget;
    opt.start_cell = start_cell(env, o);
    std::vector<TestTuple> fns;
    for (auto const& name : o.functions) fns.push_back(function_by_name(name, m.label_count(), m.fast_count, m.dim));

    ComparisonReport rep;
    if (o.t2 >= 0.0) {
        if (o.t.size() != 1 || fns.size() > 2)
            throw ParameterError("two-time comparison takes one --t value and at most two --functions");
        rep = compare_two_time(env, m, fns.front(), o.t.front(), fns.back(), o.t2, o.eps, opt);
    } else {
        rep = compare_fdd(env, m, fns, o.t, o.eps, opt);
    }
    apply_slack(rep, o.tolerance);

    fs::path dir(o.out);
    write_json(dir / "report.json", report_to_json(rep));
    write_text(dir / "report.csv", report_csv(rep));
    RunManifest man{"compare", o.env, {}, {"report.json", "report.csv"}};
    man.parameters = {{"eps", o.eps},          {"t", o.t},
                      {"paths", o.paths},      {"seed", o.seed},
                      {"workers", o.workers},  {"tolerance", o.tolerance},
                      {"functions", o.functions}, {"start", opt.start_cell},
                      {"exact_budget", o.exact_budget}};
    if (o.t2 >= 0.0) man.parameters["t2"] = o.t2;
    finish(man, o);
    std::cout << summary_table(rep);
    return ok;
}

int cmd_report(Options const& o) {
    if (o.tolerance < 0.0) throw ParameterError("--tolerance must be non-negative");
    json doc;
    try {
        doc = json::parse(read_text(o.in));
    } catch (json::exception const& e) {
        throw IoError(o.in + ": " + e.what());
    }
    ComparisonReport rep;
    try {
        rep = report_from_json(doc);
    } catch (json::exception const& e) {
        throw IoError(o.in + " is not a comparison report: " + e.what());
    }
    apply_slack(rep, o.tolerance);
    std::cout << summary_table(rep);
    if (!o.out.empty()) {
        write_json(fs::path(o.out) / "report.json", report_to_json(rep));
        write_text(fs::path(o.out) / "report.csv", report_csv(rep));
        finish({"report", "", {{"in", o.in}, {"tolerance", o.tolerance}}, {"report.json", "report.csv"}}, o);
    }
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Random walks in high-contrast periodic environments and their limit model"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);
    Options o;

    auto env_opt = [&](CLI::App* c) { c->add_option("--env", o.env, "environment JSON file")->required()->check(CLI::ExistingFile); };
    auto out_opt = [&](CLI::App* c, bool required) {
        auto* opt = c->add_option("--out", o.out, "output directory");
        if (required) opt->required();
    };
    auto run_opts = [&](CLI::App* c) {
        c->add_option("--paths", o.paths, "number of sample paths")->check(CLI::PositiveNumber);
        c->add_option("--seed", o.seed, "random seed");
        c->add_option("--workers", o.workers, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
        c->add_option("--start", o.start, "start lattice point, comma separated")->delimiter(',');
    };

    auto* validate = app.add_subcommand("validate", "check an environment file");
    env_opt(validate);
    out_opt(validate, false);

    auto* solve = app.add_subcommand("solve", "compute correctors and the limit model");
    env_opt(solve);
    out_opt(solve, true);
    solve->add_option("--method", o.method, "singular solver")->check(CLI::IsMember({"cg", "direct"}));

    auto* simulate = app.add_subcommand("simulate", "sample microscale walks and/or the limit process");
    env_opt(simulate);
    out_opt(simulate, true);
    run_opts(simulate);
    simulate->add_option("--eps", o.eps, "eps values, comma separated")->delimiter(',');
    simulate->add_option("--T", o.T, "time horizon");
    simulate->add_option("--grid", o.grid, "limit output grid size");
    simulate->add_flag("--limit", o.limit, "also sample the limit process");
    simulate->add_flag("--trajectories", o.trajectories, "write full trajectory CSVs");

    auto* compare = app.add_subcommand("compare", "compare microscale and limit expectations");
    env_opt(compare);
    out_opt(compare, true);
    run_opts(compare);
    compare->add_option("--eps", o.eps, "eps values, comma separated (default 0.4,0.2,0.1)")->delimiter(',');
    compare->add_option("--t", o.t, "observation times, comma separated (default 0.25,0.5)")->delimiter(',');
    compare->add_option("--t2", o.t2, "second time for a two-time comparison");
    compare->add_option("--functions", o.functions, "paired, gauss, cosbump_fast, one")->delimiter(',');
    compare->add_option("--tolerance", o.tolerance, "absolute slack added to the 3 sigma band");
    compare->add_option("--exact-budget", o.exact_budget, "largest cone evaluated exactly");

    auto* report = app.add_subcommand("report", "re-summarize a comparison report");
    report->add_option("--in", o.in, "report.json from compare")->required();
    out_opt(report, false);
    report->add_option("--tolerance", o.tolerance, "absolute slack added to the 3 sigma band");

    try {
        app.parse(argc, argv);
    } catch (CLI::CallForHelp const& e) {
        return app.exit(e);
    } catch (CLI::CallForAllHelp const& e) {
        return app.exit(e);
    } catch (CLI::CallForVersion const& e) {
        return app.exit(e);
    } catch (CLI::ParseError const& e) {
        app.exit(e);
        return validation_failure;
    }

    if (compare->parsed()) {
        if (o.eps.empty()) o.eps = {0.4, 0.2, 0.1};
        if (o.t.empty()) o.t = {0.25, 0.5};
    }

    try {
        if (validate->parsed()) return cmd_validate(o);
        if (solve->parsed()) return cmd_solve(o);
        if (simulate->parsed()) return cmd_simulate(o);
        if (compare->parsed()) return cmd_compare(o);
        return cmd_report(o);
    } catch (ValidationError const& e) {
        std::cerr << "validation failed: " << e.what() << "\n";
        return validation_failure;
    } catch (ParameterError const& e) {
        std::cerr << "invalid parameter: " << e.what() << "\n";
        return validation_failure;
    } catch (SolverError const& e) {
        std::cerr << "solver failed: " << e.what() << "\n";
        return solver_failure;
    } catch (IoError const& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return io_failure;
    }
}
