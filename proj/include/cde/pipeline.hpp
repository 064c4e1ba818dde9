#pragma once

#include <map>
#include <optional>
#include <string>

#include "cde/assumption_checks.hpp"
#include "cde/dcf.hpp"
#include "cde/dimensionality.hpp"
#include "cde/imputation.hpp"
#include "cde/latent_models.hpp"
#include "cde/missingness.hpp"
#include "cde/simulation.hpp"
#include "cde/types.hpp"

namespace cde {

/// Flat key=value configuration with typed getters. Every consumed key is
/// recorded (with its effective value) for the report echo.
class Config {
public:
    Config() = default;
    static Config from_file(const std::string& path);
    static Config from_string(const std::string& text);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;

    const std::map<std::string, std::string>& effective() const { return effective_; }

private:
    std::map<std::string, std::string> values_;
    mutable std::map<std::string, std::string> effective_;
};

struct Flag {
    std::string check;
    std::string severity;  // "info" | "warning" | "flag"
    std::string message;
};

struct PipelineReport {
    ModelClass chosen_class = ModelClass::Agm;
    int n_dim = 1;
    LatentModel model;
    LatentModel centering_baseline;

    std::string missingness_verdict;  // "no missing values" | "MCAR" | "MAR" | "MNAR_SUSPECT"
    std::optional<LittleResult> little;
    std::vector<MarCourseResult> mar_table;

    PveResult pve;
    int pca_upper_bound = 1;
    int bic_scan_bound = 1;
    struct BicRow {
        int n_dim;
        double log_likelihood;  // joint (AGM) or marginal (IRT)
        long k;
        double bic;
        bool selected;
    };
    std::vector<BicRow> bic_table;

    Q3Report q3;
    SplitHalfReport split_half;
    ValidityReport validity;
    ResidualPcaReport residual_pca;

    DifficultyEstimates difficulty;
    std::optional<DifficultyEstimates> difficulty_over_time;

    std::vector<Flag> flags;
    std::map<std::string, std::string> config_echo;
    Warnings notes;
};

/// Full Fig-1 style pipeline: scale normalization, model-class selection,
/// missingness classification, imputation, PCA bound, BIC dimension scan,
/// final fit, assumption checks, measurement properties.
PipelineReport run_method(const CourseResponseMatrix& m, const GradeScaleSpec& spec,
                          const Config& config = {});

/// DCF on top of a pipeline result. Empty course name runs all courses with
/// the BH correction.
std::vector<DcfResult> dcf_entrypoint(const CourseResponseMatrix& m, const PipelineReport& report,
                                      const std::string& course_name, const GroupAssignment& groups,
                                      const Config& config = {});

enum class ReportFormat { Json, DelimitedTables };

/// Writes the report files into out_dir (summary.json plus delimited tables).
std::vector<std::string> emit_report(const PipelineReport& report, ReportFormat format,
                                     const std::string& out_dir);

}  // namespace cde
