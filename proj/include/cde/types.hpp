#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cde {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;
using IntMatrix = Eigen::MatrixXi;

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Direction { Ascending, Descending };
enum class ScaleKind { Binary, Ordinal, Continuous };

struct GradeScaleSpec {
    double lowest_grade = 0.0;
    Direction direction = Direction::Ascending;
    ScaleKind kind = ScaleKind::Continuous;
    std::optional<double> pass_threshold;
};

/// Students x courses grade table. Missing cells are flagged in `observed`;
/// the corresponding `grades` entries are unspecified. Immutable by convention
/// after construction: transforms return new matrices.
struct CourseResponseMatrix {
    std::vector<std::string> student_ids;
    std::vector<std::string> course_ids;
    Matrix grades;        // |S| x |C|
    BoolMatrix observed;  // |S| x |C|
    GradeScaleSpec scale;
    std::optional<IntMatrix> term_of_grade;  // |S| x |C| term indices

    Eigen::Index n_students() const { return grades.rows(); }
    Eigen::Index n_courses() const { return grades.cols(); }

    Eigen::Index n_observed() const {
        Eigen::Index n = 0;
        for (Eigen::Index j = 0; j < observed.cols(); ++j)
            for (Eigen::Index i = 0; i < observed.rows(); ++i)
                if (observed(i, j)) ++n;
        return n;
    }

    Eigen::Index n_missing() const { return grades.size() - n_observed(); }

    int course_index(const std::string& id) const {
        for (size_t j = 0; j < course_ids.size(); ++j)
            if (course_ids[j] == id) return static_cast<int>(j);
        throw Error("unknown course id: " + id);
    }

    int student_index(const std::string& id) const {
        for (size_t i = 0; i < student_ids.size(); ++i)
            if (student_ids[i] == id) return static_cast<int>(i);
        throw Error("unknown student id: " + id);
    }
};

/// Two-group assignment (codes -1 / +1) keyed by student id.
struct GroupAssignment {
    std::vector<std::string> student_ids;
    std::vector<int> group;  // -1 or +1, aligned with student_ids

    int group_of(const std::string& id) const {
        for (size_t i = 0; i < student_ids.size(); ++i)
            if (student_ids[i] == id) return group[i];
        throw Error("student not in group assignment: " + id);
    }
};

using Warnings = std::vector<std::string>;

}  // namespace cde
