#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace crm {

// Dense row-major matrix of 64-bit reals. The single carrier type for
// weights, activations and gradients.
struct Matrix2D {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix2D() = default;
    Matrix2D(int r, int c, double fill = 0.0);
    Matrix2D(int r, int c, std::vector<double> values);

    static Matrix2D identity(int n);

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return data.size(); }
    bool same_shape(const Matrix2D& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const;
    bool all_finite() const;
};

Matrix2D matmul(const Matrix2D& a, const Matrix2D& b);
Matrix2D transpose(const Matrix2D& a);
Matrix2D add(const Matrix2D& a, const Matrix2D& b);
Matrix2D sub(const Matrix2D& a, const Matrix2D& b);
Matrix2D scale(const Matrix2D& a, double s);
Matrix2D hadamard(const Matrix2D& a, const Matrix2D& b);

void add_in_place(Matrix2D& a, const Matrix2D& b);
void add_scaled_in_place(Matrix2D& a, const Matrix2D& b, double s);

double max_abs_diff(const Matrix2D& a, const Matrix2D& b);

void require_shape(const Matrix2D& m, int rows, int cols, const std::string& what);

}  // namespace crm
