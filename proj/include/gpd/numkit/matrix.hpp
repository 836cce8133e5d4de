#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gpd::numkit {

/// Dense row-major 64-bit matrix used for all linear algebra outside the
/// network layers.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> d);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::vector<double> column(std::size_t j) const;
    Matrix transpose() const;
    Matrix block_columns(std::size_t first, std::size_t count) const;

    double frobenius_norm() const;
    bool all_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

/// Solve (A + ridge*I) x = b for symmetric positive (semi)definite A via
/// Cholesky. Throws NumericalError when the factorization breaks down.
std::vector<double> solve_spd(const Matrix& a, std::span<const double> b, double ridge = 0.0);

/// Lower-triangular Cholesky factor; returns false instead of throwing when A
/// is not positive definite.
bool cholesky(const Matrix& a, Matrix& lower);

}  // namespace gpd::numkit
