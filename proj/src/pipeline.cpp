#include "cde/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cde/correlation.hpp"
#include "cde/grade_data.hpp"
#include "cde/stats.hpp"

namespace cde {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

Config Config::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str());
}

Config Config::from_string(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
            return s;
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (!key.empty()) cfg.set(key, val);
    }
    return cfg;
}

void Config::set(const std::string& key, const std::string& value) { values_[key] = value; }

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

double Config::get_double(const std::string& key, double fallback) const {
    double v = fallback;
    auto it = values_.find(key);
    if (it != values_.end()) v = std::stod(it->second);
    std::ostringstream os;
    os.precision(12);
    os << v;
    effective_[key] = os.str();
    return v;
}

int Config::get_int(const std::string& key, int fallback) const {
    int v = fallback;
    auto it = values_.find(key);
    if (it != values_.end()) v = std::stoi(it->second);
    effective_[key] = std::to_string(v);
    return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    bool v = fallback;
    auto it = values_.find(key);
    if (it != values_.end()) v = it->second == "1" || it->second == "true" || it->second == "yes";
    effective_[key] = v ? "true" : "false";
    return v;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    std::string v = fallback;
    auto it = values_.find(key);
    if (it != values_.end()) v = it->second;
    effective_[key] = v;
    return v;
}

// ---------------------------------------------------------------------------
// run_method
// ---------------------------------------------------------------------------

namespace {

ScaleKind resolve_kind(const CourseResponseMatrix& m, const std::string& requested,
                       int ordinal_max_categories) {
    if (requested == "binary") return ScaleKind::Binary;
    if (requested == "ordinal") return ScaleKind::Ordinal;
    if (requested == "continuous") return ScaleKind::Continuous;
    if (requested != "auto") throw Error("scale.kind must be auto|binary|ordinal|continuous");
    std::vector<double> vals = distinct_grades(m);
    if (vals.size() < 2) throw Error("matrix has fewer than two distinct grade values");
    if (vals.size() == 2) return ScaleKind::Binary;
    bool integral = true;
    for (double v : vals) integral &= std::fabs(v - std::round(v)) < 1e-9;
    if (integral && static_cast<int>(vals.size()) <= ordinal_max_categories)
        return ScaleKind::Ordinal;
    return ScaleKind::Continuous;
}

void add_flag(PipelineReport& rep, const std::string& check, const std::string& severity,
              const std::string& message) {
    rep.flags.push_back({check, severity, message});
}

}  // namespace

PipelineReport run_method(const CourseResponseMatrix& input, const GradeScaleSpec& spec,
                          const Config& config) {
    PipelineReport rep;
    const std::uint64_t seed =
        static_cast<std::uint64_t>(config.get_int("seed", 1));

    CourseResponseMatrix m = input;
    m.scale = spec;
    if (input.term_of_grade) m.term_of_grade = input.term_of_grade;
    m = normalize_scale(m);

    const int min_observed = config.get_int("filter.min_observed", 1);
    {
        Warnings w;
        m = filter_students(m, min_observed, &w);
        for (const auto& msg : w) add_flag(rep, "filtering", "info", msg);
    }

    // ---- grade-scale decision flow ----
    m.scale.kind = resolve_kind(m, config.get_string("scale.kind", "auto"),
                                config.get_int("scale.ordinal_max_categories", 10));
    if (m.scale.kind == ScaleKind::Ordinal) {
        const size_t n_cats = distinct_grades(m).size();
        if (n_cats >= 5) {
            Warnings w;
            m = percentile_transform(m, &w);
            for (const auto& msg : w) add_flag(rep, "scale", "warning", msg);
            rep.notes.push_back("ordinal scale with >= 5 categories treated as continuous via percentile transform");
        } else {
            if (!m.scale.pass_threshold)
                throw Error("ordinal scale with fewer than 5 categories requires a pass threshold for binarization");
            Warnings w;
            m = binarize(m, *m.scale.pass_threshold, &w);
            for (const auto& msg : w) add_flag(rep, "scale", "warning", msg);
            rep.notes.push_back("ordinal scale with < 5 categories binarized at the pass threshold");
        }
    }
    rep.chosen_class = m.scale.kind == ScaleKind::Binary ? ModelClass::Irt : ModelClass::Agm;

    // ---- centering baseline (always) ----
    rep.centering_baseline = centering_estimates(m);

    // ---- missingness ----
    CourseResponseMatrix complete = m;
    if (m.n_missing() > 0) {
        Warnings w;
        rep.little = little_mcar_test(m, &w);
        rep.mar_table = mar_regression_test(m);
        for (const auto& msg : w) add_flag(rep, "missingness", "warning", msg);
        MissingnessClassification cls = classify_missingness(*rep.little, rep.mar_table);
        switch (cls.verdict) {
            case MissingnessVerdict::MCAR: rep.missingness_verdict = "MCAR"; break;
            case MissingnessVerdict::MAR: rep.missingness_verdict = "MAR"; break;
            case MissingnessVerdict::MNAR_SUSPECT: rep.missingness_verdict = "MNAR_SUSPECT"; break;
        }
        for (const auto& cid : cls.flagged_courses)
            add_flag(rep, "missingness", "flag", "low pseudo-R2, interpret with caution: " + cid);
        if (cls.verdict == MissingnessVerdict::MNAR_SUSPECT)
            add_flag(rep, "missingness", "flag",
                     "MNAR suspected: imputation proceeds but collecting the missing data is preferable");

        if (cls.verdict == MissingnessVerdict::MCAR) {
            complete = mean_impute(m);
        } else {
            int k = config.get_int("mipca.components", 0);
            if (k <= 0) k = default_mipca_components(m);
            MipcaResult r = mipca_impute(m, k, config.get_double("mipca.tol", 1e-4),
                                         config.get_int("mipca.max_iter", 100));
            if (!r.converged)
                add_flag(rep, "imputation", "warning", "MIPCA stopped at the iteration cap");
            complete = std::move(r.completed);
        }
    } else {
        rep.missingness_verdict = "no missing values";
    }

    // ---- dimensionality ----
    {
        Warnings w;
        CorrelationMatrix corr = correlation_matrix(complete, &w);
        for (const auto& msg : w) add_flag(rep, "correlation", "warning", msg);
        rep.pve = pca_pve(corr);
        const double thr = config.get_double("pca.variance_threshold", 0.5);
        rep.pca_upper_bound = dim_upper_bound(rep.pve, thr);
        rep.bic_scan_bound = bic_candidate_bound(rep.pve, thr);
    }
    int max_dim = config.get_int("bic.max_dim", 0);
    if (max_dim <= 0) max_dim = rep.bic_scan_bound;
    max_dim = std::min<int>(max_dim, static_cast<int>(std::min(m.n_students(), m.n_courses())) - 1);

    // ---- BIC scan within the selected class ----
    AgmOptions agm_opts;
    agm_opts.tol = config.get_double("agm.tol", 1e-8);
    agm_opts.max_sweeps = config.get_int("agm.max_sweeps", 500);
    agm_opts.seed = seed;
    IrtOptions irt_opts;
    irt_opts.ridge = config.get_double("irt.ridge", 1e-4);
    irt_opts.max_epochs = config.get_int("irt.max_epochs", 500);
    irt_opts.grad_tol = config.get_double("irt.grad_tol", 1e-6);
    irt_opts.min_students_warning = config.get_int("irt.min_students", 75);
    irt_opts.drop_degenerate = config.get_bool("irt.drop_degenerate", false);
    irt_opts.seed = seed;

    rep.n_dim = 1;
    if (rep.chosen_class == ModelClass::Agm) {
        double best = std::numeric_limits<double>::infinity();
        std::vector<LatentModel> fits;
        for (int d = 1; d <= max_dim; ++d) {
            LatentModel fit = fit_agm(m, d, agm_opts);
            const double b = bic(fit, m);
            rep.bic_table.push_back({d, fit.log_likelihood, fit.n_params, b, false});
            if (b < best) {
                best = b;
                rep.n_dim = d;
            }
            fits.push_back(std::move(fit));
        }
        for (auto& row : rep.bic_table) row.selected = row.n_dim == rep.n_dim;
        rep.model = std::move(fits[static_cast<size_t>(rep.n_dim - 1)]);
    } else {
        std::vector<int> dims;
        for (int d = 1; d <= max_dim; ++d) dims.push_back(d);
        MarginalBicOptions mb;
        mb.seed = seed;
        std::vector<IrtBicEntry> entries = irt_marginal_bic(m, dims, mb);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& e : entries) {
            rep.bic_table.push_back({e.n_dim, e.marginal_ll, e.k_items, e.bic, false});
            if (e.bic < best) {
                best = e.bic;
                rep.n_dim = e.n_dim;
            }
        }
        for (auto& row : rep.bic_table) row.selected = row.n_dim == rep.n_dim;
        rep.model = fit_irt(m, rep.n_dim, irt_opts);
    }
    for (const auto& w : rep.model.warnings) add_flag(rep, "fit", "warning", w);
    if (!rep.model.converged)
        add_flag(rep, "fit", "flag", "model stopped before reaching the gradient tolerance");

    // ---- assumption checks ----
    rep.q3 = yen_q3(rep.model, m, config.get_int("q3.min_joint", 10));
    if (!rep.q3.violations.empty())
        add_flag(rep, "local_independence", "flag",
                 std::to_string(rep.q3.violations.size()) +
                     " course pair(s) exceed the Q3 threshold; merging is a manual decision");

    const SplitMode mode = m.term_of_grade ? SplitMode::Time : SplitMode::Random;
    const double rel_thr = config.get_double("reliability.threshold", 0.6);
    try {
        rep.split_half = split_half_correlation(m, rep.chosen_class, rep.n_dim, mode, seed);
        if (rep.split_half.student_corr < rel_thr || rep.split_half.course_corr < rel_thr)
            add_flag(rep, "reliability", "flag", "split-half correlation below threshold");
    } catch (const Error& e) {
        rep.split_half.student_corr = std::numeric_limits<double>::quiet_NaN();
        rep.split_half.course_corr = std::numeric_limits<double>::quiet_NaN();
        rep.split_half.flagged = true;
        add_flag(rep, "reliability", "flag", std::string("split-half check unavailable: ") + e.what());
    }

    rep.validity = concurrent_validity(rep.model, m);
    const double val_thr = config.get_double("validity.threshold", 0.6);
    if (rep.validity.student_r < val_thr || rep.validity.course_r < val_thr)
        add_flag(rep, "validity", "flag", "concurrent validity below threshold");

    rep.residual_pca = residual_pca_check(rep.model, complete);
    if (rep.residual_pca.flagged)
        add_flag(rep, "residual_structure", "flag",
                 "residual first PVE exceeds the data's second PVE");

    // ---- outputs ----
    rep.difficulty = unidim_difficulty(rep.model);
    for (const auto& w : rep.difficulty.warnings) add_flag(rep, "difficulty", "warning", w);

    if (m.term_of_grade && config.get_bool("timeresolved.enable", true)) {
        TimeResolvedOptions tr;
        tr.model_class = rep.chosen_class;
        tr.n_dim = rep.n_dim;
        tr.bootstrap_reps = config.get_int("timeresolved.bootstrap", 200);
        tr.min_offering_size = config.get_int("timeresolved.min_offering", 75);
        tr.seed = seed;
        rep.difficulty_over_time = fit_time_resolved(m, tr);
        for (const auto& w : rep.difficulty_over_time->warnings)
            add_flag(rep, "time_resolved", "info", w);
    }

    rep.config_echo = config.effective();
    rep.config_echo["resolved.scale_kind"] =
        m.scale.kind == ScaleKind::Binary ? "binary" : "continuous";
    return rep;
}

std::vector<DcfResult> dcf_entrypoint(const CourseResponseMatrix& input,
                                      const PipelineReport& report, const std::string& course_name,
                                      const GroupAssignment& groups, const Config& config) {
    CourseResponseMatrix m = input;
    m.scale.kind = report.model.model_class == ModelClass::Irt ? ScaleKind::Binary
                                                               : ScaleKind::Continuous;
    DcfOptions opts;
    opts.min_group_size = config.get_int("dcf.min_group", 10);
    const double q = config.get_double("dcf.q", 0.05);
    if (!course_name.empty()) {
        DcfResult r = dcf_course(m, report.model, course_name, groups, opts);
        BhResult bh = bh_correct({r.p_raw}, q);
        r.p_bh = bh.adjusted[0];
        r.significant = bh.reject[0];
        return {r};
    }
    return dcf_all(m, report.model, groups, q, opts);
}

// ---------------------------------------------------------------------------
// emit_report
// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
    if (std::isnan(v)) return "na";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

void write_file(const std::string& path, const std::string& content,
                std::vector<std::string>& written) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write report file: " + path);
    out << content;
    written.push_back(path);
}

nlohmann::json difficulty_json(const DifficultyEstimates& d) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index j = 0; j < d.difficulty.size(); ++j) {
        nlohmann::json row;
        row["id"] = d.course_ids[static_cast<size_t>(j)];
        row["course"] = d.parent_course[static_cast<size_t>(j)];
        row["term"] = d.term[static_cast<size_t>(j)];
        row["difficulty"] = d.difficulty[j];
        row["raw_projection"] = d.raw_projection[j];
        if (d.has_ci) {
            row["ci_lower"] = d.ci_lower[j];
            row["ci_upper"] = d.ci_upper[j];
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

std::vector<std::string> emit_report(const PipelineReport& rep, ReportFormat format,
                                     const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir)) throw Error("cannot create output directory: " + out_dir);
    std::vector<std::string> written;

    if (format == ReportFormat::Json) {
        nlohmann::json j;
        j["format"] = "cde-report";
        j["version"] = 1;
        j["model_class"] = to_string(rep.chosen_class);
        j["n_dim"] = rep.n_dim;
        j["missingness"] = rep.missingness_verdict;
        if (rep.little) {
            j["little"]["t2"] = rep.little->t2;
            j["little"]["dof"] = rep.little->dof;
            j["little"]["p_value"] = rep.little->p_value;
        }
        {
            nlohmann::json t = nlohmann::json::array();
            for (const auto& r : rep.mar_table) {
                nlohmann::json row;
                row["course"] = r.course_id;
                row["skipped"] = r.skipped;
                if (!r.skipped) {
                    row["p_gpa"] = r.p_values[0];
                    row["p_std"] = r.p_values[1];
                    row["p_min"] = r.p_values[2];
                    row["p_max"] = r.p_values[3];
                    row["pseudo_r2"] = r.pseudo_r2;
                    row["flagged"] = r.flagged;
                }
                t.push_back(std::move(row));
            }
            j["mar_table"] = std::move(t);
        }
        {
            nlohmann::json p;
            p["eigenvalues"] = std::vector<double>(rep.pve.eigenvalues.data(),
                                                   rep.pve.eigenvalues.data() + rep.pve.eigenvalues.size());
            p["pve"] = std::vector<double>(rep.pve.pve.data(), rep.pve.pve.data() + rep.pve.pve.size());
            p["upper_bound"] = rep.pca_upper_bound;
            p["bic_scan_bound"] = rep.bic_scan_bound;
            j["pca"] = std::move(p);
        }
        {
            nlohmann::json t = nlohmann::json::array();
            for (const auto& row : rep.bic_table)
                t.push_back({{"n_dim", row.n_dim},
                             {"log_likelihood", row.log_likelihood},
                             {"k", row.k},
                             {"bic", row.bic},
                             {"selected", row.selected}});
            j["bic_table"] = std::move(t);
        }
        j["q3"]["mean"] = rep.q3.mean_q3;
        j["q3"]["pairs_defined"] = rep.q3.n_pairs_defined;
        j["q3"]["violations"] = rep.q3.violations.size();
        j["split_half"]["mode"] = rep.split_half.mode == SplitMode::Time ? "time" : "random";
        j["split_half"]["student_corr"] = rep.split_half.student_corr;
        j["split_half"]["course_corr"] = rep.split_half.course_corr;
        j["validity"]["student_r"] = rep.validity.student_r;
        j["validity"]["course_r"] = rep.validity.course_r;
        j["residual_pca"]["degenerate"] = rep.residual_pca.degenerate;
        j["residual_pca"]["flagged"] = rep.residual_pca.flagged;
        if (!rep.residual_pca.degenerate && rep.residual_pca.residual_pve.size() > 0)
            j["residual_pca"]["first_pve"] = rep.residual_pca.residual_pve[0];
        j["difficulty"] = difficulty_json(rep.difficulty);
        if (rep.difficulty_over_time)
            j["difficulty_over_time"] = difficulty_json(*rep.difficulty_over_time);
        {
            nlohmann::json t = nlohmann::json::array();
            const Vector scores = rep.model.theta.col(0);
            for (size_t i = 0; i < rep.model.student_ids.size(); ++i) {
                nlohmann::json row;
                row["student"] = rep.model.student_ids[i];
                nlohmann::json th = nlohmann::json::array();
                for (int d = 0; d < rep.n_dim; ++d)
                    th.push_back(rep.model.theta(static_cast<Eigen::Index>(i), d));
                row["theta"] = std::move(th);
                t.push_back(std::move(row));
            }
            j["traits"] = std::move(t);
        }
        {
            nlohmann::json t = nlohmann::json::array();
            for (const auto& f : rep.flags)
                t.push_back({{"check", f.check}, {"severity", f.severity}, {"message", f.message}});
            j["flags"] = std::move(t);
        }
        j["centering_baseline"]["delta"] = std::vector<double>(
            rep.centering_baseline.delta.data(),
            rep.centering_baseline.delta.data() + rep.centering_baseline.delta.rows());
        j["config"] = rep.config_echo;
        j["notes"] = rep.notes;
        write_file(out_dir + "/summary.json", j.dump(2) + "\n", written);
    }

    // delimited tables (always emitted; they are the plot-ready series)
    {
        std::ostringstream os;
        os << "course,difficulty,raw_projection,ci_lower,ci_upper\n";
        const DifficultyEstimates& d = rep.difficulty;
        for (Eigen::Index jj = 0; jj < d.difficulty.size(); ++jj) {
            os << d.course_ids[static_cast<size_t>(jj)] << "," << fmt(d.difficulty[jj]) << ","
               << fmt(d.raw_projection[jj]) << ",";
            os << (d.has_ci ? fmt(d.ci_lower[jj]) : "na") << ","
               << (d.has_ci ? fmt(d.ci_upper[jj]) : "na") << "\n";
        }
        write_file(out_dir + "/difficulty.csv", os.str(), written);
    }
    {
        std::ostringstream os;
        os << "student";
        for (int dd = 0; dd < rep.n_dim; ++dd) os << ",theta_" << dd + 1;
        os << "\n";
        for (size_t i = 0; i < rep.model.student_ids.size(); ++i) {
            os << rep.model.student_ids[i];
            for (int dd = 0; dd < rep.n_dim; ++dd)
                os << "," << fmt(rep.model.theta(static_cast<Eigen::Index>(i), dd));
            os << "\n";
        }
        write_file(out_dir + "/traits.csv", os.str(), written);
    }
    {
        std::ostringstream os;
        os << "component,eigenvalue,pve,cumulative\n";
        for (Eigen::Index i = 0; i < rep.pve.eigenvalues.size(); ++i)
            os << i + 1 << "," << fmt(rep.pve.eigenvalues[i]) << "," << fmt(rep.pve.pve[i]) << ","
               << fmt(rep.pve.cumulative[i]) << "\n";
        write_file(out_dir + "/pve.csv", os.str(), written);
    }
    {
        std::ostringstream os;
        os << "n_dim,log_likelihood,k,bic,selected\n";
        for (const auto& row : rep.bic_table)
            os << row.n_dim << "," << fmt(row.log_likelihood) << "," << row.k << ","
               << fmt(row.bic) << "," << (row.selected ? 1 : 0) << "\n";
        write_file(out_dir + "/bic.csv", os.str(), written);
    }
    {
        std::ostringstream os;
        os << "course,p_gpa,p_std,p_min,p_max,pseudo_r2,flagged\n";
        for (const auto& r : rep.mar_table) {
            if (r.skipped) {
                os << r.course_id << ",na,na,na,na,na,skipped\n";
                continue;
            }
            os << r.course_id << "," << fmt(r.p_values[0]) << "," << fmt(r.p_values[1]) << ","
               << fmt(r.p_values[2]) << "," << fmt(r.p_values[3]) << "," << fmt(r.pseudo_r2) << ","
               << (r.flagged ? 1 : 0) << "\n";
        }
        write_file(out_dir + "/mar_table.csv", os.str(), written);
    }
    {
        std::ostringstream os;
        os << "check,metric,value,flagged\n";
        os << "missingness,verdict," << rep.missingness_verdict << ",";
        os << (rep.missingness_verdict == "MNAR_SUSPECT" ? 1 : 0) << "\n";
        if (rep.little) os << "missingness,little_p," << fmt(rep.little->p_value) << ",0\n";
        os << "dimensionality,pve_1," << fmt(rep.pve.pve.size() > 0 ? rep.pve.pve[0] : 0.0) << ",0\n";
        os << "dimensionality,pve_2," << fmt(rep.pve.pve.size() > 1 ? rep.pve.pve[1] : 0.0) << ",0\n";
        os << "dimensionality,selected_dim," << rep.n_dim << ",0\n";
        os << "local_independence,mean_q3," << fmt(rep.q3.mean_q3) << ",0\n";
        os << "local_independence,violations," << rep.q3.violations.size() << ","
           << (rep.q3.violations.empty() ? 0 : 1) << "\n";
        os << "reliability,student_split_half," << fmt(rep.split_half.student_corr) << ","
           << (rep.split_half.student_corr < 0.6 ? 1 : 0) << "\n";
        os << "reliability,course_split_half," << fmt(rep.split_half.course_corr) << ","
           << (rep.split_half.course_corr < 0.6 ? 1 : 0) << "\n";
        os << "validity,student_r," << fmt(rep.validity.student_r) << ","
           << (rep.validity.student_r < 0.6 ? 1 : 0) << "\n";
        os << "validity,course_r," << fmt(rep.validity.course_r) << ","
           << (rep.validity.course_r < 0.6 ? 1 : 0) << "\n";
        write_file(out_dir + "/assumptions.csv", os.str(), written);
    }
    {
        std::ostringstream os;
        os << "course_a,course_b,q3,residual_sign\n";
        for (const auto& v : rep.q3.violations)
            os << v.course_a << "," << v.course_b << "," << fmt(v.q3) << "," << v.residual_sign << "\n";
        write_file(out_dir + "/q3_violations.csv", os.str(), written);
    }
    {
        std::ostringstream os;
        os << "check,severity,message\n";
        for (const auto& f : rep.flags) os << f.check << "," << f.severity << ",\"" << f.message << "\"\n";
        write_file(out_dir + "/flags.csv", os.str(), written);
    }
    if (rep.difficulty_over_time) {
        std::ostringstream os;
        os << "offering,course,term,difficulty,ci_lower,ci_upper\n";
        const DifficultyEstimates& d = *rep.difficulty_over_time;
        for (Eigen::Index jj = 0; jj < d.difficulty.size(); ++jj) {
            os << d.course_ids[static_cast<size_t>(jj)] << ","
               << d.parent_course[static_cast<size_t>(jj)] << "," << d.term[static_cast<size_t>(jj)]
               << "," << fmt(d.difficulty[jj]) << ","
               << (d.has_ci ? fmt(d.ci_lower[jj]) : "na") << ","
               << (d.has_ci ? fmt(d.ci_upper[jj]) : "na") << "\n";
        }
        write_file(out_dir + "/difficulty_over_time.csv", os.str(), written);
    }
    return written;
}

}  // namespace cde
