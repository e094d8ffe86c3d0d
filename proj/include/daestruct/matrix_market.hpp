#pragma once

// Matrix Market ASCII reader/writer (array and coordinate formats, 1-based
// indices, dense matrices only).

#include "daestruct/errors.hpp"
#include "daestruct/linalg.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace daestruct {

inline Matrix read_matrix_market(std::istream& in, const std::string& origin = "<stream>") {
    std::string line;
    if (!std::getline(in, line)) throw IoError(origin + ": empty matrix market stream");
    std::istringstream header(line);
    std::string banner, object, format, field, symmetry;
    header >> banner >> object >> format >> field >> symmetry;
    if (banner != "%%MatrixMarket" || object != "matrix") {
        throw IoError(origin + ": missing %%MatrixMarket matrix header");
    }
    if (field != "real" && field != "integer") {
        throw IoError(origin + ": unsupported field type '" + field + "'");
    }
    if (symmetry != "general") {
        throw IoError(origin + ": only 'general' symmetry is supported");
    }

    auto next_data_line = [&](std::string& out) -> bool {
        while (std::getline(in, out)) {
            std::size_t i = 0;
            while (i < out.size() && std::isspace(static_cast<unsigned char>(out[i]))) ++i;
            if (i == out.size() || out[i] == '%') continue;
            return true;
        }
        return false;
    };

    if (!next_data_line(line)) throw IoError(origin + ": missing size line");
    std::istringstream size_line(line);

    if (format == "array") {
        Index rows = -1, cols = -1;
        size_line >> rows >> cols;
        if (rows < 0 || cols < 0) throw IoError(origin + ": bad array size line");
        Matrix m(rows, cols);
        // Array format lists entries column-major.
        for (Index j = 0; j < cols; ++j) {
            for (Index i = 0; i < rows; ++i) {
                if (!next_data_line(line)) throw IoError(origin + ": truncated array data");
                std::istringstream v(line);
                double value;
                if (!(v >> value)) throw IoError(origin + ": bad array entry");
                m(i, j) = value;
            }
        }
        return m;
    }
    if (format == "coordinate") {
        Index rows = -1, cols = -1, nnz = -1;
        size_line >> rows >> cols >> nnz;
        if (rows < 0 || cols < 0 || nnz < 0) throw IoError(origin + ": bad coordinate size line");
        Matrix m = Matrix::Zero(rows, cols);
        for (Index k = 0; k < nnz; ++k) {
            if (!next_data_line(line)) throw IoError(origin + ": truncated coordinate data");
            std::istringstream v(line);
            Index i = 0, j = 0;
            double value;
            if (!(v >> i >> j >> value)) throw IoError(origin + ": bad coordinate entry");
            if (i < 1 || i > rows || j < 1 || j > cols) {
                throw IoError(origin + ": coordinate entry out of range");
            }
            m(i - 1, j - 1) += value;
        }
        return m;
    }
    throw IoError(origin + ": unknown format '" + format + "'");
}

inline Matrix read_matrix_market_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open matrix market file: " + path);
    return read_matrix_market(in, path);
}

inline void write_matrix_market(std::ostream& out, const Matrix& m) {
    out << "%%MatrixMarket matrix array real general\n";
    out << m.rows() << " " << m.cols() << "\n";
    char buf[64];
    for (Index j = 0; j < m.cols(); ++j) {
        for (Index i = 0; i < m.rows(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
            out << buf << "\n";
        }
    }
}

inline void write_matrix_market_file(const std::string& path, const Matrix& m) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open matrix market file for writing: " + path);
    write_matrix_market(out, m);
}

} // namespace daestruct
