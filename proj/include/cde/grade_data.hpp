#pragma once

#include <string>

#include "cde/types.hpp"

namespace cde {

/// Reads a delimited grade table (comma or tab, auto-detected). First row is
/// the course-name header, first column the student ids; empty cells and
/// "nan"/"na" denote missing grades.
CourseResponseMatrix load_matrix(const std::string& path, const GradeScaleSpec& spec);

/// Parses the same format from an in-memory string (used by tests and stdin).
CourseResponseMatrix parse_matrix(const std::string& text, const GradeScaleSpec& spec);

/// Term-index table with the same layout as the grade matrix; cells for
/// missing grades may be empty.
void load_terms(const std::string& path, CourseResponseMatrix& m);

GroupAssignment load_groups(const std::string& path);
GroupAssignment parse_groups(const std::string& text);

void write_matrix(const CourseResponseMatrix& m, const std::string& path);

/// Reflects descending scales so that internally higher is always better and
/// the worst possible grade maps to 0. Idempotent on ascending input.
CourseResponseMatrix normalize_scale(const CourseResponseMatrix& m);

/// Pooled mid-rank percentile transform onto [0, 100].
CourseResponseMatrix percentile_transform(const CourseResponseMatrix& m, Warnings* warnings = nullptr);

/// Pass/fail conversion: observed grade >= threshold becomes 1. Columns that
/// end up constant are reported in `warnings`.
CourseResponseMatrix binarize(const CourseResponseMatrix& m, double threshold,
                              Warnings* warnings = nullptr);

/// Drops students with fewer than `min_observed` grades, then courses left
/// without observations.
CourseResponseMatrix filter_students(const CourseResponseMatrix& m, int min_observed,
                                     Warnings* warnings = nullptr);

/// Distinct observed grade values (sorted), used by the scale decision flow.
std::vector<double> distinct_grades(const CourseResponseMatrix& m);

}  // namespace cde
