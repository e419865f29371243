#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace scmal {

class IllConditionedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class KernelKind { rbf, constant };

/// Stationary covariance function. `rbf` is
/// amplitude * exp(-|x - y|^2 / (2 bandwidth^2)); `constant` is amplitude
/// everywhere (the prior of a parentless node).
template <typename Scalar>
struct Kernel {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    KernelKind kind = KernelKind::rbf;
    Scalar bandwidth = Scalar(1);
    Scalar amplitude = Scalar(1);

    static Kernel rbf(Scalar bandwidth, Scalar amplitude = Scalar(1))
    {
        if (!(bandwidth > 0) || !(amplitude > 0)) throw std::invalid_argument("kernel parameters must be positive");
        return {KernelKind::rbf, bandwidth, amplitude};
    }

    static Kernel constant(Scalar amplitude)
    {
        if (!(amplitude > 0)) throw std::invalid_argument("kernel amplitude must be positive");
        return {KernelKind::constant, Scalar(1), amplitude};
    }

    /// Per-coordinate factor; the kernel is amplitude times the product of these.
    Scalar factor(Scalar a, Scalar b) const
    {
        if (kind == KernelKind::constant) return Scalar(1);
        const Scalar d = a - b;
        return std::exp(-d * d / (2 * bandwidth * bandwidth));
    }

    template <class A, class B>
    Scalar operator()(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) const
    {
        if (kind == KernelKind::constant) return amplitude;
        return amplitude * std::exp(-(x - y).squaredNorm() / (2 * bandwidth * bandwidth));
    }

    /// Cross-covariance between the rows of `x` and the rows of `y`.
    Matrix gram(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& y) const
    {
        if (kind == KernelKind::constant) return Matrix::Constant(x.rows(), y.rows(), amplitude);
        Matrix sq = (-2 * x * y.transpose()).colwise() + x.rowwise().squaredNorm();
        sq.rowwise() += y.rowwise().squaredNorm().transpose();
        return amplitude * (-(sq.array().max(Scalar(0))) / (2 * bandwidth * bandwidth)).exp().matrix();
    }
};

template <typename Scalar, class A, class B>
Scalar kernel_eval(const Kernel<Scalar>& k, const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y)
{
    if (x.size() != y.size()) throw std::invalid_argument("kernel arguments differ in dimension");
    return k(x, y);
}

/// Noisy evaluations of one structural function: row s of `inputs` is the
/// parent configuration of observation s.
template <typename Scalar>
struct RegressionData {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    Matrix inputs;
    Vector outputs;
    Scalar noise_var = Scalar(1);

    RegressionData() = default;
    RegressionData(Eigen::Index dim, Scalar noise) : inputs(0, dim), outputs(0), noise_var(noise) {}
    RegressionData(Matrix x, Vector y, Scalar noise) : inputs(std::move(x)), outputs(std::move(y)), noise_var(noise)
    {
        check();
    }

    Eigen::Index size() const { return outputs.size(); }
    Eigen::Index dim() const { return inputs.cols(); }

    void check() const
    {
        if (inputs.rows() != outputs.size()) throw std::invalid_argument("inputs and outputs differ in length");
        if (!(noise_var > 0)) throw std::invalid_argument("noise variance must be positive");
        if (!inputs.allFinite() || !outputs.allFinite()) throw std::invalid_argument("regression data must be finite");
    }
};

/// Exact GP posterior given noisy data. The Cholesky factor of K + (noise +
/// jitter) I is computed once at construction; jitter starts at 1e-10 times
/// the amplitude and doubles on failure up to 1e-6.
template <typename Scalar>
class NodePosterior {
public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    NodePosterior(Kernel<Scalar> kernel, RegressionData<Scalar> data) : kernel_(kernel), data_(std::move(data))
    {
        data_.check();
        const Eigen::Index n = data_.size();
        const Matrix gram = kernel_.gram(data_.inputs, data_.inputs);
        jitter_ = Scalar(1e-10) * kernel_.amplitude;
        const Scalar max_jitter = Scalar(1e-6) * kernel_.amplitude;
        for (;;) {
            Matrix a = gram;
            a.diagonal().array() += data_.noise_var + jitter_;
            chol_.compute(a);
            if (chol_.info() == Eigen::Success) break;
            jitter_ *= 2;
            if (jitter_ > max_jitter) throw IllConditionedError("Gram matrix factorization failed at maximum jitter");
        }
        alpha_ = n ? Vector(chol_.solve(data_.outputs)) : Vector(0);
    }

    const Kernel<Scalar>& kernel() const { return kernel_; }
    const RegressionData<Scalar>& data() const { return data_; }
    Eigen::Index size() const { return data_.size(); }
    Eigen::Index dim() const { return data_.dim(); }
    Scalar jitter() const { return jitter_; }
    const Eigen::LLT<Matrix>& factor() const { return chol_; }
    const Vector& weights() const { return alpha_; }

    /// L^{-1} k(X, x) for a single query.
    template <class A>
    Vector whiten(const Eigen::MatrixBase<A>& x) const
    {
        Vector kx(size());
        for (Eigen::Index s = 0; s < size(); ++s) kx[s] = kernel_(data_.inputs.row(s).transpose(), x);
        if (size()) chol_.matrixL().solveInPlace(kx);
        return kx;
    }

    template <class A>
    std::pair<Scalar, Scalar> mean_var(const Eigen::MatrixBase<A>& x) const
    {
        check_dim(x.size());
        Vector kx(size());
        for (Eigen::Index s = 0; s < size(); ++s) kx[s] = kernel_(data_.inputs.row(s).transpose(), x);
        const Scalar mean = size() ? kx.dot(alpha_) : Scalar(0);
        if (size()) chol_.matrixL().solveInPlace(kx);
        return {mean, clamp_var(kernel_.amplitude - kx.squaredNorm())};
    }

    template <class A, class B>
    Scalar covariance(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) const
    {
        check_dim(x.size());
        check_dim(y.size());
        return kernel_(x, y) - (size() ? whiten(x).dot(whiten(y)) : Scalar(0));
    }

    /// Posterior means at the rows of `q`.
    Vector mean(const Eigen::Ref<const Matrix>& q) const
    {
        check_dim(q.cols());
        if (!size()) return Vector::Zero(q.rows());
        return kernel_.gram(q, data_.inputs) * alpha_;
    }

    /// Posterior variances at the rows of `q`, clamped to [0, amplitude].
    Vector variance(const Eigen::Ref<const Matrix>& q) const
    {
        check_dim(q.cols());
        if (!size()) return Vector::Constant(q.rows(), kernel_.amplitude);
        Matrix cross = kernel_.gram(data_.inputs, q);
        chol_.matrixL().solveInPlace(cross);
        Vector v = (Scalar(kernel_.amplitude) - cross.colwise().squaredNorm().array()).matrix().transpose();
        return v.unaryExpr([this](Scalar s) { return clamp_var(s); });
    }

private:
    void check_dim(Eigen::Index d) const
    {
        if (d != dim()) throw std::invalid_argument("query dimension does not match posterior input dimension");
    }

    Scalar clamp_var(Scalar v) const { return std::clamp(v, Scalar(0), kernel_.amplitude); }

    Kernel<Scalar> kernel_;
    RegressionData<Scalar> data_;
    Eigen::LLT<Matrix> chol_;
    Vector alpha_;
    Scalar jitter_ = 0;
};

template <typename Scalar>
NodePosterior<Scalar> fit_posterior(const Kernel<Scalar>& k, RegressionData<Scalar> data)
{
    return NodePosterior<Scalar>(k, std::move(data));
}

template <typename Scalar, class A>
std::pair<Scalar, Scalar> posterior_mean_var(const NodePosterior<Scalar>& p, const Eigen::MatrixBase<A>& x)
{
    return p.mean_var(x);
}

/// Conjugate update of a zero-mean Gaussian prior on an unknown constant from
/// `observations` with known noise variance. Returns (mean, variance).
template <typename Scalar>
std::pair<Scalar, Scalar> constant_posterior(Scalar prior_var, Scalar noise_var, std::span<const Scalar> observations)
{
    if (!(prior_var > 0) || !(noise_var > 0)) throw std::invalid_argument("variances must be positive");
    Scalar sum = 0;
    for (Scalar o : observations) sum += o;
    const Scalar m = static_cast<Scalar>(observations.size());
    const Scalar var = Scalar(1) / (Scalar(1) / prior_var + m / noise_var);
    return {var * sum / noise_var, var};
}

}  // namespace scmal
