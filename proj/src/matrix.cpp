#include "crm/matrix.hpp"

#include <cmath>

namespace crm {

Matrix2D::Matrix2D(int r, int c, double fill) {
    if (r <= 0 || c <= 0) {
        throw std::invalid_argument("Matrix2D: dimensions must be positive, got " +
                                    std::to_string(r) + "x" + std::to_string(c));
    }
    rows = r;
    cols = c;
    data.assign(static_cast<size_t>(r) * c, fill);
}

Matrix2D::Matrix2D(int r, int c, std::vector<double> values) {
    if (r <= 0 || c <= 0) {
        throw std::invalid_argument("Matrix2D: dimensions must be positive");
    }
    if (values.size() != static_cast<size_t>(r) * c) {
        throw std::invalid_argument("Matrix2D: data length " + std::to_string(values.size()) +
                                    " does not match " + std::to_string(r) + "x" + std::to_string(c));
    }
    rows = r;
    cols = c;
    data = std::move(values);
}

Matrix2D Matrix2D::identity(int n) {
    Matrix2D m(n, n, 0.0);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

std::string Matrix2D::shape_str() const {
    return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

bool Matrix2D::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Matrix2D matmul(const Matrix2D& a, const Matrix2D& b) {
    if (a.cols != b.rows) {
        throw std::invalid_argument("matmul: inner dimensions differ, " + a.shape_str() +
                                    " * " + b.shape_str());
    }
    Matrix2D out(a.rows, b.cols, 0.0);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[static_cast<size_t>(i) * a.cols];
        double* orow = &out.data[static_cast<size_t>(i) * out.cols];
        for (int k = 0; k < a.cols; ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            const double* brow = &b.data[static_cast<size_t>(k) * b.cols];
            for (int j = 0; j < b.cols; ++j) {
                orow[j] += av * brow[j];
            }
        }
    }
    return out;
}

Matrix2D transpose(const Matrix2D& a) {
    Matrix2D out(a.cols, a.rows, 0.0);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

static void require_same_shape(const Matrix2D& a, const Matrix2D& b, const char* op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch, " + a.shape_str() +
                                    " vs " + b.shape_str());
    }
}

Matrix2D add(const Matrix2D& a, const Matrix2D& b) {
    require_same_shape(a, b, "add");
    Matrix2D out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Matrix2D sub(const Matrix2D& a, const Matrix2D& b) {
    require_same_shape(a, b, "sub");
    Matrix2D out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

Matrix2D scale(const Matrix2D& a, double s) {
    Matrix2D out = a;
    for (double& v : out.data) v *= s;
    return out;
}

Matrix2D hadamard(const Matrix2D& a, const Matrix2D& b) {
    require_same_shape(a, b, "hadamard");
    Matrix2D out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

void add_in_place(Matrix2D& a, const Matrix2D& b) {
    require_same_shape(a, b, "add_in_place");
    for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

void add_scaled_in_place(Matrix2D& a, const Matrix2D& b, double s) {
    require_same_shape(a, b, "add_scaled_in_place");
    for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += s * b.data[i];
}

double max_abs_diff(const Matrix2D& a, const Matrix2D& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = std::fabs(a.data[i] - b.data[i]);
        if (d > m) m = d;
    }
    return m;
}

void require_shape(const Matrix2D& m, int rows, int cols, const std::string& what) {
    if (m.rows != rows || m.cols != cols) {
        throw std::invalid_argument(what + ": expected (" + std::to_string(rows) + "x" +
                                    std::to_string(cols) + "), got " + m.shape_str());
    }
}

}  // namespace crm
