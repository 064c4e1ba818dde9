#include "cde/grade_data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace cde {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

bool is_missing_token(std::string t) {
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    return t.empty() || t == "nan" || t == "na";
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, sep)) out.push_back(trim(field));
    if (!line.empty() && line.back() == sep) out.push_back("");
    return out;
}

char detect_separator(const std::string& header) {
    return header.find('\t') != std::string::npos ? '\t' : ',';
}

}  // namespace

CourseResponseMatrix parse_matrix(const std::string& text, const GradeScaleSpec& spec) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw Error("empty grade table");
    const char sep = detect_separator(line);
    std::vector<std::string> header = split(line, sep);
    if (header.size() < 2) throw Error("grade table needs a student column and at least one course");

    CourseResponseMatrix m;
    m.scale = spec;
    m.course_ids.assign(header.begin() + 1, header.end());
    {
        std::set<std::string> seen;
        for (const auto& c : m.course_ids)
            if (!seen.insert(c).second) throw Error("duplicate course id in header: " + c);
    }

    std::vector<std::vector<double>> rows;
    std::vector<std::vector<bool>> obs;
    std::set<std::string> seen_students;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<std::string> fields = split(line, sep);
        if (fields.size() != header.size())
            throw Error("row " + std::to_string(lineno) + " has " + std::to_string(fields.size()) +
                        " fields, expected " + std::to_string(header.size()));
        if (!seen_students.insert(fields[0]).second)
            throw Error("duplicate student id: " + fields[0]);
        m.student_ids.push_back(fields[0]);
        std::vector<double> r(m.course_ids.size(), 0.0);
        std::vector<bool> o(m.course_ids.size(), false);
        for (size_t j = 1; j < fields.size(); ++j) {
            if (is_missing_token(fields[j])) continue;
            try {
                size_t pos = 0;
                r[j - 1] = std::stod(fields[j], &pos);
                if (pos != fields[j].size()) throw std::invalid_argument(fields[j]);
            } catch (const std::exception&) {
                throw Error("non-numeric cell at row '" + fields[0] + "', column '" +
                            m.course_ids[j - 1] + "': " + fields[j]);
            }
            o[j - 1] = true;
        }
        rows.push_back(std::move(r));
        obs.push_back(std::move(o));
    }
    if (rows.empty()) throw Error("grade table has no student rows");

    m.grades.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.course_ids.size()));
    m.observed.resize(m.grades.rows(), m.grades.cols());
    for (Eigen::Index i = 0; i < m.grades.rows(); ++i)
        for (Eigen::Index j = 0; j < m.grades.cols(); ++j) {
            m.grades(i, j) = rows[i][j];
            m.observed(i, j) = obs[i][j];
        }
    return m;
}

CourseResponseMatrix load_matrix(const std::string& path, const GradeScaleSpec& spec) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open grade table: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_matrix(ss.str(), spec);
}

void load_terms(const std::string& path, CourseResponseMatrix& m) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open term table: " + path);
    std::string line;
    if (!std::getline(in, line)) throw Error("empty term table");
    const char sep = detect_separator(line);
    std::vector<std::string> header = split(line, sep);
    if (header.size() != m.course_ids.size() + 1) throw Error("term table header does not match matrix");
    IntMatrix terms = IntMatrix::Constant(m.grades.rows(), m.grades.cols(), -1);
    Eigen::Index i = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        if (i >= m.grades.rows()) throw Error("term table has more rows than the matrix");
        std::vector<std::string> fields = split(line, sep);
        if (fields.size() != header.size()) throw Error("ragged term table row: " + fields[0]);
        if (fields[0] != m.student_ids[static_cast<size_t>(i)])
            throw Error("term table student order does not match matrix at row " + fields[0]);
        for (size_t j = 1; j < fields.size(); ++j)
            if (!is_missing_token(fields[j])) terms(i, static_cast<Eigen::Index>(j - 1)) = std::stoi(fields[j]);
        ++i;
    }
    if (i != m.grades.rows()) throw Error("term table has fewer rows than the matrix");
    m.term_of_grade = std::move(terms);
}

GroupAssignment parse_groups(const std::string& text) {
    std::istringstream in(text);
    GroupAssignment g;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        const char sep = detect_separator(line);
        std::vector<std::string> fields = split(line, sep);
        if (first && fields.size() >= 2 && (fields[1] != "-1" && fields[1] != "1")) {
            first = false;  // header row
            continue;
        }
        first = false;
        if (fields.size() != 2) throw Error("group file rows must be 'student_id,group'");
        int code;
        try {
            code = std::stoi(fields[1]);
        } catch (const std::exception&) {
            throw Error("bad group code for student " + fields[0] + ": " + fields[1]);
        }
        if (code != -1 && code != 1) throw Error("group codes must be -1 or 1, got " + fields[1]);
        g.student_ids.push_back(fields[0]);
        g.group.push_back(code);
    }
    if (g.student_ids.empty()) throw Error("empty group assignment");
    bool has_minus = false, has_plus = false;
    for (int c : g.group) (c < 0 ? has_minus : has_plus) = true;
    if (!has_minus || !has_plus) throw Error("both groups must be non-empty");
    return g;
}

GroupAssignment load_groups(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open group file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_groups(ss.str());
}

void write_matrix(const CourseResponseMatrix& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write matrix: " + path);
    out << "student_id";
    for (const auto& c : m.course_ids) out << "," << c;
    out << "\n";
    out.precision(12);
    for (Eigen::Index i = 0; i < m.grades.rows(); ++i) {
        out << m.student_ids[static_cast<size_t>(i)];
        for (Eigen::Index j = 0; j < m.grades.cols(); ++j) {
            out << ",";
            if (m.observed(i, j)) out << m.grades(i, j);
        }
        out << "\n";
    }
}

CourseResponseMatrix normalize_scale(const CourseResponseMatrix& m) {
    if (m.scale.direction == Direction::Ascending) return m;
    CourseResponseMatrix out = m;
    for (Eigen::Index i = 0; i < m.grades.rows(); ++i)
        for (Eigen::Index j = 0; j < m.grades.cols(); ++j)
            if (m.observed(i, j)) out.grades(i, j) = m.scale.lowest_grade - m.grades(i, j);
    out.scale.direction = Direction::Ascending;
    out.scale.lowest_grade = 0.0;
    if (m.scale.pass_threshold)
        out.scale.pass_threshold = m.scale.lowest_grade - *m.scale.pass_threshold;
    return out;
}

CourseResponseMatrix percentile_transform(const CourseResponseMatrix& m, Warnings* warnings) {
    std::vector<double> pool;
    pool.reserve(static_cast<size_t>(m.grades.size()));
    for (Eigen::Index j = 0; j < m.grades.cols(); ++j)
        for (Eigen::Index i = 0; i < m.grades.rows(); ++i)
            if (m.observed(i, j)) pool.push_back(m.grades(i, j));
    if (pool.empty()) throw Error("percentile transform on a matrix without observed grades");
    std::sort(pool.begin(), pool.end());
    const double n = static_cast<double>(pool.size());
    if (pool.front() == pool.back() && warnings)
        warnings->push_back("percentile transform: all observed grades identical, every value maps to 50");

    CourseResponseMatrix out = m;
    for (Eigen::Index i = 0; i < m.grades.rows(); ++i)
        for (Eigen::Index j = 0; j < m.grades.cols(); ++j) {
            if (!m.observed(i, j)) continue;
            const double g = m.grades(i, j);
            const auto lo = std::lower_bound(pool.begin(), pool.end(), g) - pool.begin();
            const auto hi = std::upper_bound(pool.begin(), pool.end(), g) - pool.begin();
            // fraction strictly below plus half the fraction tied
            out.grades(i, j) = 100.0 * (static_cast<double>(lo) + 0.5 * static_cast<double>(hi - lo)) / n;
        }
    out.scale.kind = ScaleKind::Continuous;
    out.scale.lowest_grade = 0.0;
    out.scale.direction = Direction::Ascending;
    out.scale.pass_threshold.reset();
    return out;
}

CourseResponseMatrix binarize(const CourseResponseMatrix& m, double threshold, Warnings* warnings) {
    CourseResponseMatrix out = m;
    for (Eigen::Index j = 0; j < m.grades.cols(); ++j) {
        bool any0 = false, any1 = false, any = false;
        for (Eigen::Index i = 0; i < m.grades.rows(); ++i) {
            if (!m.observed(i, j)) continue;
            any = true;
            const double b = m.grades(i, j) >= threshold ? 1.0 : 0.0;
            out.grades(i, j) = b;
            (b > 0.5 ? any1 : any0) = true;
        }
        if (warnings && any && (!any0 || !any1))
            warnings->push_back("degenerate binary column (all " + std::string(any1 ? "1" : "0") +
                                "): " + m.course_ids[static_cast<size_t>(j)]);
    }
    out.scale.kind = ScaleKind::Binary;
    out.scale.lowest_grade = 0.0;
    out.scale.pass_threshold = threshold;
    return out;
}

CourseResponseMatrix filter_students(const CourseResponseMatrix& m, int min_observed, Warnings* warnings) {
    if (min_observed < 1) throw Error("min_observed must be >= 1");
    std::vector<Eigen::Index> keep_rows;
    for (Eigen::Index i = 0; i < m.grades.rows(); ++i) {
        int n = 0;
        for (Eigen::Index j = 0; j < m.grades.cols(); ++j) n += m.observed(i, j);
        if (n >= min_observed) keep_rows.push_back(i);
    }
    if (keep_rows.empty()) throw Error("filter_students removed every student");

    std::vector<Eigen::Index> keep_cols;
    for (Eigen::Index j = 0; j < m.grades.cols(); ++j) {
        int n = 0;
        for (Eigen::Index i : keep_rows) n += m.observed(i, j);
        if (n > 0) {
            keep_cols.push_back(j);
        } else if (warnings) {
            warnings->push_back("course without observations removed: " +
                                m.course_ids[static_cast<size_t>(j)]);
        }
    }
    if (keep_cols.empty()) throw Error("filter_students removed every course");

    CourseResponseMatrix out;
    out.scale = m.scale;
    out.grades.resize(static_cast<Eigen::Index>(keep_rows.size()), static_cast<Eigen::Index>(keep_cols.size()));
    out.observed.resize(out.grades.rows(), out.grades.cols());
    if (m.term_of_grade) out.term_of_grade = IntMatrix(out.grades.rows(), out.grades.cols());
    for (size_t i = 0; i < keep_rows.size(); ++i) {
        out.student_ids.push_back(m.student_ids[static_cast<size_t>(keep_rows[i])]);
        for (size_t j = 0; j < keep_cols.size(); ++j) {
            out.grades(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m.grades(keep_rows[i], keep_cols[j]);
            out.observed(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m.observed(keep_rows[i], keep_cols[j]);
            if (m.term_of_grade)
                (*out.term_of_grade)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    (*m.term_of_grade)(keep_rows[i], keep_cols[j]);
        }
    }
    for (Eigen::Index j : keep_cols) out.course_ids.push_back(m.course_ids[static_cast<size_t>(j)]);
    return out;
}

std::vector<double> distinct_grades(const CourseResponseMatrix& m) {
    std::set<double> vals;
    for (Eigen::Index j = 0; j < m.grades.cols(); ++j)
        for (Eigen::Index i = 0; i < m.grades.rows(); ++i)
            if (m.observed(i, j)) vals.insert(m.grades(i, j));
    return {vals.begin(), vals.end()};
}

}  // namespace cde
