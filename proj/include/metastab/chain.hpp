#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace metastab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<double>;

enum class TimeKind { discrete, continuous };

std::string to_string(TimeKind t);
TimeKind time_kind_from_string(std::string_view s);

class StateSet {
public:
    StateSet() = default;
    explicit StateSet(std::size_t universe) : mask_(universe, 0) {}
    StateSet(std::size_t universe, std::initializer_list<std::size_t> members);
    static StateSet from_indices(std::size_t universe, std::span<const std::size_t> members);
    // bit i of `bits` selects state i; universe must not exceed 64
    static StateSet from_bits(std::size_t universe, std::uint64_t bits);

    std::size_t universe() const { return mask_.size(); }
    bool contains(std::size_t i) const { return mask_[i] != 0; }
    void insert(std::size_t i) { mask_.at(i) = 1; }
    void erase(std::size_t i) { mask_.at(i) = 0; }
    std::size_t count() const;
    bool empty() const { return count() == 0; }
    std::vector<std::size_t> indices() const;

    StateSet complement() const;
    StateSet operator|(const StateSet& o) const;
    StateSet operator&(const StateSet& o) const;
    StateSet minus(const StateSet& o) const;
    bool intersects(const StateSet& o) const;
    bool subset_of(const StateSet& o) const;
    bool operator==(const StateSet& o) const = default;

private:
    std::vector<char> mask_;
};

using Partition = std::vector<StateSet>;

struct Transition {
    std::string from;
    std::string to;
    double p;
};

// A finite irreducible chain, reversible with respect to mu. In discrete time
// the jump entries are transition probabilities and the holding probability
// p(x,x) is the remainder of the row; in continuous time they are rates.
class ReversibleChain {
public:
    ReversibleChain(std::vector<std::string> states, const std::vector<Transition>& edges,
                    std::optional<std::vector<double>> mu, TimeKind time);

    // `jumps` holds off-diagonal entries only (diagonal entries are ignored).
    static ReversibleChain from_jumps(const SparseRowMatrix& jumps, std::optional<Vector> mu,
                                      TimeKind time, std::vector<std::string> names = {});

    std::size_t size() const { return static_cast<std::size_t>(mu_.size()); }
    TimeKind time() const { return time_; }
    const Vector& mu() const { return mu_; }
    const SparseRowMatrix& jumps() const { return jumps_; }
    const std::vector<std::string>& names() const { return names_; }
    std::size_t index(std::string_view name) const;

    double exit_rate(std::size_t x) const { return exit_[static_cast<Eigen::Index>(x)]; }
    double jump(std::size_t x, std::size_t y) const;
    // Discrete time: full stochastic matrix. Continuous time: generator Q.
    Matrix dense_kernel() const;
    // Symmetric matrix with f^T L f = E(f).
    SparseMatrix energy_matrix() const;

private:
    ReversibleChain() = default;
    void validate_and_finish(std::optional<Vector> mu);

    TimeKind time_ = TimeKind::discrete;
    SparseRowMatrix jumps_;
    Vector mu_;
    Vector exit_;
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> lookup_;
};

double mass(const Vector& nu, const StateSet& a);
Vector restrict_normalized(const Vector& nu, const StateSet& a);
double mean(const Vector& nu, const Vector& f);
double variance(const Vector& nu, const Vector& f);
// Ent_nu[F] for F >= 0. Pass F = f^2 for the usual functional.
double entropy(const Vector& nu, const Vector& F);
double log_mean(double a, double b);

Vector generator_apply(const ReversibleChain& chain, const Vector& f);
double dirichlet_form(const ReversibleChain& chain, const Vector& f);
double dirichlet_form(const ReversibleChain& chain, const Vector& f, const Vector& g);
void validate_partition(const Partition& parts, std::size_t universe);
Vector conditional_expectation(const Vector& nu, const Partition& parts, const Vector& f);

}  // namespace metastab
