#include "feqstab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace feqstab {

namespace {

// Stream constants that keep the residual samples independent of the grid.
constexpr std::uint64_t tuple_stream = 0x5851f42d4c957f2dULL;
constexpr std::uint64_t fe312_stream = 0x14057b7ef767814fULL;
constexpr std::size_t residual_samples = 50;
constexpr std::size_t fe312_samples = 200;
constexpr std::size_t uniqueness_points = 50;
constexpr double telescoping_slack = 1e-9;

std::string num(double x) { return format_double(x); }

ReportMetadata metadata(const std::string& command, const Target& target, const RunOptions& o) {
    ReportMetadata m;
    m.command = command;
    m.target = target.name;
    m.params = target.params;
    m.seed = o.seed;
    m.eta = o.eta;
    m.tol = o.tol;
    m.grid_box = o.grid_box;
    m.grid_count = o.grid_count;
    m.grid_file = o.grid_file ? o.grid_file->string() : "";
    m.max_iter = o.max_iter;
    m.dim = o.dim;
    m.oscillator = std::string(to_string(o.oscillator));
    m.version = version_string;
    m.timestamp = o.timestamp;
    return m;
}

std::vector<PairPoint> grid_for(const RunOptions& o) {
    if (o.grid_file) {
        auto grid = read_grid(*o.grid_file);
        for (const auto& p : grid)
            if (p.dim() != o.dim)
                throw ValidationError("grid file " + o.grid_file->string() + " has points of dimension " +
                                      std::to_string(p.dim()) + ", expected " + std::to_string(o.dim));
        return grid;
    }
    return default_grid(o.dim, o.grid_box, o.grid_count);
}

// Perturbed model for the target. Without an eigenfactor the margin argument
// is unavailable and the hash perturbation is only audited.
FunctionModel build_model(const Target& t, const RunOptions& o, std::uint64_t seed, std::vector<std::string>* warnings) {
    const BilinearCore core = BilinearCore::identity(o.dim);
    if (eigenfactor(t.spec, t.bound))
        return make_perturbed_model(core, t.bound, t.spec, o.eta, seed, o.oscillator);
    if (!(o.eta >= 0.0 && o.eta <= 1.0))
        throw ValidationError("eta must lie in [0, 1]");
    if (warnings)
        warnings->push_back("perturbation margin not guaranteed without an eigenfactor; admissibility is audited only");
    if (o.eta == 0.0)
        return FunctionModel(core);
    return FunctionModel(core, PerturbationSpec(t.bound.scaled(1.0 / (1.0 + t.spec.abs_coef_sum())), o.eta, seed,
                                                core.codomain()));
}

void fill_catalog_fields(StabilityReport& r, const Target& t) {
    r.eigenfactor = eigenfactor(t.spec, t.bound);
    r.contractive = r.eigenfactor && *r.eigenfactor < 1.0;
    if (t.entry) {
        r.warnings = t.entry->notes;
        r.series_constant = t.entry->series_constant;
        r.paper_constant = t.entry->paper_constant;
        r.discrepancy = t.entry->discrepancy;
    } else if (r.eigenfactor && *r.eigenfactor < 1.0) {
        r.series_constant = 1.0 / (1.0 - *r.eigenfactor);
    }
}

StabilitySummary summarize(const StabilityAudit& a) {
    StabilitySummary s{a.rows.size(), a.min_slack, a.max_violation, a.verdict, std::nullopt};
    if (a.witness)
        s.witness = a.witness->flat();
    return s;
}

void finish(StabilityReport& r) {
    bool audit_fail = (r.admissibility && r.admissibility->verdict == Verdict::fail) ||
                      (r.stability && r.stability->verdict == Verdict::fail);
    bool other_fail = std::any_of(r.checks.begin(), r.checks.end(),
                                  [](const CheckReport& c) { return c.verdict == Verdict::fail; });
    if (audit_fail) {
        r.status = "audit-fail";
        r.exit_code = 3;
    } else if (other_fail) {
        r.status = "fail";
        r.exit_code = 1;
    } else {
        r.status = "ok";
        r.exit_code = 0;
    }
}

void not_contractive(StabilityReport& r, double factor, const std::string& why) {
    r.status = "not-contractive";
    r.exit_code = 2;
    r.contractive = false;
    r.warnings.push_back(why + " (factor " + num(factor) + ")");
}

CheckReport residual_check(const std::string& name, std::size_t samples, double allowed, double worst,
                           std::optional<std::vector<double>> witness, const std::string& detail) {
    CheckReport c{name, worst <= allowed ? Verdict::pass : Verdict::fail, samples, worst, std::nullopt, detail};
    if (c.verdict == Verdict::fail)
        c.witness = std::move(witness);
    return c;
}

std::vector<double> flat3(const VectorElement& a, const VectorElement& b, const VectorElement& c) {
    std::vector<double> out;
    for (const auto* e : {&a, &b, &c})
        out.insert(out.end(), e->coords().begin(), e->coords().end());
    return out;
}

double median(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

} // namespace

Target catalog_target(const std::string& name, const std::map<std::string, double>& params) {
    CatalogEntry entry = catalog_entry(name, params);
    return Target{name, entry.spec, entry.bound, entry.params, entry};
}

Target document_target(const SpecDocument& doc, const std::string& source) {
    Target t{source, doc.op, doc.bound, doc.params, std::nullopt};
    const std::pair<const char*, const char*> known[] = {{"thm31", "p"}, {"thm32", "r"}};
    for (const auto& [name, key] : known) {
        if (!doc.params.count(key))
            continue;
        try {
            CatalogEntry e = catalog_entry(name, doc.params);
            if (e.spec == doc.op && e.bound == doc.bound && e.params == doc.params) {
                t.entry = std::move(e);
                return t;
            }
        } catch (const ValidationError&) {
        }
    }
    return t;
}

StabilityReport run_pipeline(const std::string& command, const Target& target, const RunOptions& o) {
    StabilityReport r;
    r.metadata = metadata(command, target, o);
    fill_catalog_fields(r, target);
    if (!(o.tol > 0.0))
        throw ValidationError("tol must be > 0");
    if (r.eigenfactor && *r.eigenfactor >= 1.0) {
        not_contractive(r, *r.eigenfactor, "operator is not contractive for this bound");
        return r;
    }
    if (!r.eigenfactor)
        r.warnings.push_back("eigenfactor absent: tails use measured ratios and mu* entries are empirical");

    for (double n : {1.0, 2.0}) {
        std::vector<double> flat(2 * o.dim, 0.0);
        flat[0] = n;
        flat[o.dim] = n;
        const PairPoint p = PairPoint::from_flat(flat);
        try {
            const MuStar m = mu_star_detail(target.spec, target.bound, p, o.tol, o.max_iter);
            r.mu_star_probes.push_back({flat, target.bound(p), m.value, !m.closed_form});
        } catch (const NotContractiveError& e) {
            not_contractive(r, e.factor(), e.what());
            return r;
        }
    }

    const FunctionModel model = build_model(target, o, o.seed, &r.warnings);
    if (model.perturbation()) {
        r.resonant = model.perturbation()->is_resonant();
        if (o.oscillator == OscillatorKind::resonant && !*r.resonant)
            r.warnings.push_back("no resonant phase alignment for this operator; hash oscillator used");
    }
    const std::vector<PairPoint> grid = grid_for(o);
    r.admissibility = audit_admissibility(model, target.spec, target.bound, grid);
    r.admissibility->params.insert(target.params.begin(), target.params.end());

    const double scale = o.tol / 1e-10;
    try {
        const LimitOptions lopt{o.max_iter, default_depth_cap, PowerMethod::automatic};
        const LimitEvaluator K(target.spec, model, target.bound, o.tol, lopt);

        // mu* table and per-point traces.
        std::vector<double> rates;
        double worst_tele = -std::numeric_limits<double>::infinity();
        std::optional<std::vector<double>> tele_witness;
        std::size_t tele_rows = 0;
        std::size_t conv_index = 0;
        double conv_mu = -1.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const PairPoint& p = grid[i];
            const LimitResult res = K.result(p);
            const double mu = target.bound(p);
            r.mu_star.push_back({p.flat(), mu, K.mu_star(p), !r.eigenfactor.has_value()});
            if (auto rate = res.trace.measured_rate())
                rates.push_back(*rate);
            for (std::size_t n = 0; n < res.trace.deltas.size(); ++n, ++tele_rows) {
                const double excess = res.trace.deltas[n] - res.trace.lambda_bounds[n];
                if (excess > worst_tele) {
                    worst_tele = excess;
                    if (excess > telescoping_slack)
                        tele_witness = p.flat();
                }
            }
            if (mu > conv_mu) {
                conv_mu = mu;
                conv_index = i;
            }
        }
        if (!rates.empty())
            r.measured_rate = median(rates);
        if (r.eigenfactor && r.measured_rate && model.perturbation() && !*r.resonant)
            r.warnings.push_back("hash perturbation: measured rate reflects the noise, not the eigenfactor");

        if (!grid.empty()) {
            const LimitResult res = K.result(grid[conv_index]);
            r.convergence_point = grid[conv_index].flat();
            for (std::size_t n = 0; n < res.trace.deltas.size(); ++n)
                r.convergence.push_back({static_cast<int>(n), res.trace.deltas[n], res.trace.lambda_bounds[n],
                                         res.trace.tail_bounds[n]});
        }

        r.stability = summarize(verify_stability(K, grid));

        r.checks.push_back(residual_check("telescoping", tele_rows, telescoping_slack,
                                          tele_rows ? worst_tele : 0.0, tele_witness,
                                          "max of |T^n f - T^(n+1) f| - Lambda^n mu over all traced n"));

        // Fixed point: |K - TK|.
        {
            double worst = 0.0;
            std::optional<std::vector<double>> witness;
            for (const PairPoint& p : grid) {
                const Value k = K(p);
                const Value tk = apply_operator(target.spec, K, p);
                Value d(k);
                for (std::size_t j = 0; j < d.size(); ++j)
                    d[j] -= tk[j];
                const double e = norm(d);
                if (e > worst) {
                    worst = e;
                    witness = p.flat();
                }
            }
            r.checks.push_back(residual_check("fixed_point", grid.size(), 2.0 * o.tol, worst, witness,
                                              "max |K - TK|; allowed 2 tol"));
        }

        // Uniqueness against an independent perturbation of the same core.
        {
            const FunctionModel other = build_model(target, o, o.seed + 1, nullptr);
            const LimitEvaluator K2(target.spec, other, target.bound, o.tol, lopt);
            const std::size_t n = std::min(uniqueness_points, grid.size());
            const UniquenessReport u = uniqueness_probe(K, K2, std::span(grid).first(n));
            CheckReport c{"uniqueness", u.verdict, u.points, u.max_difference, std::nullopt,
                          "max |K_seed - K_(seed+1)|; allowed " + num(u.allowed)};
            if (u.verdict == Verdict::fail && u.witness)
                c.witness = u.witness->flat();
            r.checks.push_back(c);
        }

        // Structure of the limit; samples stay inside the grid box after addition.
        CoreTransfer transfer(target.spec);
        const double allowed = 1e-6 * scale;
        if (transfer.fixes_bilinear()) {
            const auto quads = random_quadruples(o.dim, 0.5 * o.grid_box, residual_samples, o.seed ^ tuple_stream);
            for (Slot slot : {Slot::first, Slot::second}) {
                double worst = 0.0;
                std::optional<std::vector<double>> witness;
                for (const auto& q : quads) {
                    const double e = biadditivity_residual(K, q.x, q.y, q.w, slot);
                    if (e > worst) {
                        worst = e;
                        witness = flat3(q.x, q.y, q.w);
                    }
                }
                r.checks.push_back(residual_check(slot == Slot::first ? "biadditivity_first" : "biadditivity_second",
                                                  quads.size(), allowed, worst, witness,
                                                  "max biadditivity residual of K; allowed " + num(allowed)));
            }
            double worst = 0.0;
            std::optional<std::vector<double>> witness;
            for (const auto& q : quads) {
                const double e = fe_residual(K, q);
                if (e > worst) {
                    worst = e;
                    witness = flatten(q);
                }
            }
            r.checks.push_back(residual_check("fe_residual", quads.size(), allowed, worst, witness,
                                              "max FE residual of K; allowed " + num(allowed)));
        } else {
            r.checks.push_back({"biadditivity_first", Verdict::skipped, 0, 0.0, std::nullopt,
                                "bilinear maps are not fixed points of this operator"});
            r.checks.push_back({"biadditivity_second", Verdict::skipped, 0, 0.0, std::nullopt,
                                "bilinear maps are not fixed points of this operator"});
            r.checks.push_back({"fe_residual", Verdict::skipped, 0, 0.0, std::nullopt,
                                "bilinear maps are not fixed points of this operator"});
        }

        if (target.entry && target.entry->name == "thm32") {
            const auto quads = random_quadruples(o.dim, o.grid_box, fe312_samples, o.seed ^ fe312_stream);
            r.checks.push_back(fe312_bound_check(model, target.entry->params.at("r"), quads));
        }
    } catch (const NotContractiveError& e) {
        r.mu_star.clear();
        r.convergence.clear();
        r.convergence_point.clear();
        r.checks.clear();
        r.stability.reset();
        not_contractive(r, e.factor(), e.what());
        return r;
    } catch (const IterationLimitError& e) {
        r.warnings.push_back(std::string(e.what()) + " (last tail " + num(e.last_tail()) + ")");
        r.checks.push_back({"limit", Verdict::fail, 0, e.last_tail(), std::vector<double>{}, e.what()});
    }
    finish(r);
    return r;
}

StabilityReport cmd_demo(const std::string& name, const RunOptions& options) {
    return run_pipeline("demo", catalog_target(name, options.params), options);
}

StabilityReport cmd_run(const SpecDocument& doc, const std::string& source, const RunOptions& options) {
    return run_pipeline("run", document_target(doc, source), options);
}

StabilityReport cmd_check(const Target& target, const RunOptions& o, const CheckOptions& checks) {
    StabilityReport r;
    r.metadata = metadata("check", target, o);
    fill_catalog_fields(r, target);
    const FunctionModel model = build_model(target, o, o.seed, &r.warnings);
    if (model.perturbation())
        r.resonant = model.perturbation()->is_resonant();
    const std::vector<PairPoint> grid = grid_for(o);
    r.admissibility = audit_admissibility(model, target.spec, target.bound, grid);
    r.admissibility->params.insert(target.params.begin(), target.params.end());

    if (checks.fe31) {
        const auto p = target.params.find("p");
        if (p == target.params.end()) {
            r.checks.push_back({"fe31", Verdict::skipped, 0, 0.0, std::nullopt, "needs parameter p"});
        } else {
            const auto quads = random_quadruples(o.dim, o.grid_box, fe312_samples, o.seed ^ tuple_stream);
            const AdmissibilityReport a = audit_fe31(model, p->second, quads);
            std::string detail = "max FE residual / (|x||y||z||w|)^p at eta " + num(o.eta);
            if (target.entry) {
                const EtaMargin m = fe31_eta_margin(BilinearCore::identity(o.dim), *target.entry, o.seed, quads,
                                                    o.oscillator);
                detail += "; largest passing eta by halving: " + num(m.eta);
            }
            r.checks.push_back({"fe31", a.verdict, a.grid_size, a.max_ratio, a.witness, detail});
        }
    }
    if (checks.symmetry) {
        double worst = 0.0;
        std::optional<std::vector<double>> witness;
        const Evaluatable f = [&model](const PairPoint& q) { return model.evaluate(q); };
        for (const PairPoint& q : grid) {
            const double e = symmetry_residual(f, q.first(), q.second());
            if (e > worst) {
                worst = e;
                witness = q.flat();
            }
        }
        r.checks.push_back(residual_check("symmetry", grid.size(), 1e-12, worst, witness, "max |f(x,y) - f(y,x)|"));
    }
    const bool fail = r.admissibility->verdict == Verdict::fail ||
                      std::any_of(r.checks.begin(), r.checks.end(),
                                  [](const CheckReport& c) { return c.verdict == Verdict::fail; });
    r.status = fail ? "audit-fail" : "ok";
    r.exit_code = fail ? 3 : 0;
    return r;
}

namespace {

const char* bound_header = "param,value,eigenfactor,series_constant,paper_constant,discrepancy\n";

std::string csv_number(double x) {
    if (std::isinf(x))
        return x > 0 ? "inf" : "-inf";
    return format_double(x);
}

} // namespace

std::string cmd_bound(const std::string& name, const Sweep& sweep, const std::map<std::string, double>& fixed) {
    if (!(sweep.step > 0.0) || !std::isfinite(sweep.step))
        throw ValidationError("sweep step must be > 0");
    if (!std::isfinite(sweep.from) || !std::isfinite(sweep.to))
        throw ValidationError("sweep range must be finite");
    std::string out = bound_header;
    if (sweep.from > sweep.to)
        return out;
    const auto count = static_cast<long long>(std::floor((sweep.to - sweep.from) / sweep.step + 1e-9)) + 1;
    for (long long i = 0; i < count; ++i) {
        const double value = sweep.from + static_cast<double>(i) * sweep.step;
        auto params = fixed;
        params[sweep.param] = value;
        const CatalogEntry e = catalog_entry(name, params);
        out += sweep.param + "," + csv_number(value) + "," + csv_number(e.factor) + "," +
               csv_number(e.series_constant) + "," + (e.paper_constant ? csv_number(*e.paper_constant) : "") + "," +
               (e.discrepancy ? "1" : "0") + "\n";
    }
    return out;
}

std::string cmd_bound(const SpecDocument& doc) {
    std::string out = bound_header;
    const auto c = eigenfactor(doc.op, doc.bound);
    out += ",," + (c ? csv_number(*c) : std::string("absent")) + "," +
           (c && *c < 1.0 ? csv_number(1.0 / (1.0 - *c)) : std::string(c ? "inf" : "")) + ",,0\n";
    return out;
}

std::string export_spec(const CatalogEntry& entry) {
    return "# " + entry.name + "\n" + format_spec(entry.spec, entry.bound, entry.params);
}

} // namespace feqstab
