// feq-stab: stability runs for biadditive functional equations.
//
//   feq-stab demo thm31 --p 4 --eta 0.5 --seed 1 --tol 1e-10
//   feq-stab run spec.feq --out report.json --csv convergence.csv
//   feq-stab bound thm32 --param r --from 2.5 --to 5 --step 0.5 --rho 0.2
//   feq-stab check thm31 --fe31
//   feq-stab export-spec thm32 --r 3 --rho 0.2 --out thm32.feq
//
// Exit codes: 0 all PASS, 1 other failure, 2 not contractive, 3 audit FAIL,
// 4 spec parse error.

#include "feqstab/pipeline.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>

using namespace feqstab;

namespace {

struct Flags {
    std::optional<double> p, r, rho;
    RunOptions run;
    std::string oscillator = "resonant";
    std::string grid_file;
    std::string out;
    std::string csv;
};

std::string now_utc() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void catalog_flags(CLI::App* app, Flags& f) {
    app->add_option("--p", f.p, "exponent p (thm31)");
    app->add_option("--r", f.r, "exponent r (thm32)");
    app->add_option("--rho", f.rho, "rho, |rho| < 1 (thm32)");
}

void model_flags(CLI::App* app, Flags& f) {
    app->add_option("--eta", f.run.eta, "perturbation amplitude in [0, 1]")->capture_default_str();
    app->add_option("--seed", f.run.seed, "perturbation seed")->capture_default_str();
    app->add_option("--tol", f.run.tol, "limit tolerance")->capture_default_str();
    app->add_option("--grid-box", f.run.grid_box, "grid half-width")->capture_default_str();
    app->add_option("--grid-count", f.run.grid_count, "grid points")->capture_default_str();
    app->add_option("--grid-file", f.grid_file, "read the grid from a file instead");
    app->add_option("--max-iter", f.run.max_iter, "iteration cap")->capture_default_str();
    app->add_option("--dim", f.run.dim, "slot dimension d")->capture_default_str();
    app->add_option("--oscillator", f.oscillator, "perturbation shape: resonant or hash")
        ->check(CLI::IsMember({"resonant", "hash"}))
        ->capture_default_str();
    app->add_option("--out", f.out, "write the JSON report here instead of stdout");
    app->add_option("--csv", f.csv, "write the convergence series as CSV");
}

std::map<std::string, double> catalog_params(const Flags& f) {
    std::map<std::string, double> params;
    if (f.p)
        params["p"] = *f.p;
    if (f.r)
        params["r"] = *f.r;
    if (f.rho)
        params["rho"] = *f.rho;
    return params;
}

void finalize(Flags& f) {
    f.run.oscillator = parse_oscillator(f.oscillator);
    if (!f.grid_file.empty())
        f.run.grid_file = f.grid_file;
    f.run.timestamp = now_utc();
}

int emit(const StabilityReport& report, const Flags& f) {
    if (f.out.empty()) {
        std::cout << report_to_json(report);
    } else {
        write_report(report, f.out);
        std::cout << report.metadata.target << ": " << report.status << " (exit " << report.exit_code << ")\n";
    }
    if (!f.csv.empty())
        write_text(f.csv, convergence_csv(report));
    for (const auto& c : report.checks)
        if (c.verdict == Verdict::fail)
            std::cerr << "FAIL " << c.name << ": worst " << format_double(c.worst) << "\n";
    return report.exit_code;
}

bool is_catalog_name(const std::string& s) { return s == "thm31" || s == "thm32"; }

void write_or_print(const std::string& text, const std::string& out) {
    if (out.empty())
        std::cout << text;
    else
        write_text(out, text);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stability runs for biadditive functional equations"};
    app.require_subcommand(1);
    app.set_version_flag("--version", version_string);

    Flags f;
    std::string target;

    auto* demo = app.add_subcommand("demo", "run a catalog entry end to end");
    demo->add_option("name", target, "thm31 or thm32")->required()->check(CLI::IsMember({"thm31", "thm32"}));
    catalog_flags(demo, f);
    model_flags(demo, f);

    auto* run = app.add_subcommand("run", "run a .feq spec end to end");
    run->add_option("spec", target, "spec file")->required();
    model_flags(run, f);

    Sweep sweep;
    bool from_set = false, to_set = false, step_set = false;
    auto* bound = app.add_subcommand("bound", "tabulate eigenfactor and stability constants");
    bound->add_option("target", target, "thm31, thm32 or a .feq file")->required();
    catalog_flags(bound, f);
    bound->add_option("--param", sweep.param, "parameter to sweep (default p for thm31, r for thm32)");
    bound->add_option("--from", sweep.from, "first value")->each([&](const std::string&) { from_set = true; });
    bound->add_option("--to", sweep.to, "last value")->each([&](const std::string&) { to_set = true; });
    bound->add_option("--step", sweep.step, "increment (default 1 for p, 0.5 for r)")->each([&](const std::string&) {
        step_set = true;
    });
    std::string bound_out;
    bound->add_option("--out", bound_out, "write the CSV here instead of stdout");

    CheckOptions check_opts;
    auto* check = app.add_subcommand("check", "admissibility audits only");
    check->add_option("target", target, "thm31, thm32 or a .feq file")->required();
    catalog_flags(check, f);
    model_flags(check, f);
    check->add_flag("--fe31", check_opts.fe31, "four-point audit with eta margin search (needs p)");
    check->add_flag("--symmetry", check_opts.symmetry, "audit f(x,y) = f(y,x)");

    auto* exporter = app.add_subcommand("export-spec", "write a catalog entry as .feq");
    exporter->add_option("name", target, "thm31 or thm32")->required()->check(CLI::IsMember({"thm31", "thm32"}));
    catalog_flags(exporter, f);
    std::string export_out;
    exporter->add_option("--out", export_out, "output path (default stdout)");

    CLI11_PARSE(app, argc, argv);

    std::string spec_path;
    try {
        if (demo->parsed()) {
            finalize(f);
            f.run.params = catalog_params(f);
            return emit(cmd_demo(target, f.run), f);
        }
        if (run->parsed()) {
            finalize(f);
            spec_path = target;
            const SpecDocument doc = read_spec(target);
            return emit(cmd_run(doc, target, f.run), f);
        }
        if (check->parsed()) {
            finalize(f);
            Target t = is_catalog_name(target) ? catalog_target(target, catalog_params(f))
                                               : (spec_path = target, document_target(read_spec(target), target));
            return emit(cmd_check(t, f.run, check_opts), f);
        }
        if (bound->parsed()) {
            if (is_catalog_name(target)) {
                if (sweep.param.empty())
                    sweep.param = target == "thm31" ? "p" : "r";
                if (!from_set)
                    sweep.from = target == "thm31" ? 3.0 : 2.5;
                if (!to_set)
                    sweep.to = 5.0;
                if (!step_set)
                    sweep.step = target == "thm31" ? 1.0 : 0.5;
                write_or_print(cmd_bound(target, sweep, catalog_params(f)), bound_out);
            } else {
                spec_path = target;
                write_or_print(cmd_bound(read_spec(target)), bound_out);
            }
            return 0;
        }
        if (exporter->parsed()) {
            write_or_print(export_spec(catalog_entry(target, catalog_params(f))), export_out);
            return 0;
        }
    } catch (const ParseError& e) {
        std::cerr << spec_path << ":" << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
