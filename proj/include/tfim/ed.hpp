#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <array>
#include <complex>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tfim/lattice.hpp"

namespace tfim {
class CacheDir;
}

namespace tfim::ed {

using Complex = std::complex<double>;

// Observables that commute with every translation and the global spin flip,
// and are therefore block diagonal in every symmetry sector.
enum class Observable { identity, total_energy, zz_bond_sum, x_sum, M2, M4, C_nn };

inline constexpr std::array kAllObservables{
    Observable::identity, Observable::total_energy, Observable::zz_bond_sum, Observable::x_sum,
    Observable::M2,       Observable::M4,           Observable::C_nn};

std::string_view name(Observable obs);
Observable observable_from_name(std::string_view name);

// Momentum (kx, ky) in units of 2*pi/L together with the spin-flip parity, or
// the unreduced basis.
struct SectorLabel {
    int kx = 0;
    int ky = 0;
    int parity = 1;
    bool full = false;

    std::string str() const;
    friend bool operator==(const SectorLabel&, const SectorLabel&) = default;
};

// Basis of one symmetry sector: each basis vector is the normalized symmetric
// combination of the orbit of a representative bitstring. Bit i set means
// sigma^z_i = -1, so bitstring 0 is the fully up-polarized state.
struct SectorBasis {
    SectorLabel label;
    int n_sites = 0;
    std::vector<std::uint32_t> representatives;
    std::vector<int> stabilizer_size;
    std::vector<double> zz;   // sum over bonds of sigma^z sigma^z
    std::vector<double> mz;   // sum over sites of sigma^z
    Eigen::SparseMatrix<Complex> x_sum;

    int dim() const noexcept { return static_cast<int>(representatives.size()); }
};

struct EdOptions {
    int max_sites_symmetric = 16;
    int max_sites_dense = 14;
    int threads = 1;
};

// Sector bases for a lattice; independent of J and h, so initial and final
// Hamiltonians of a quench share them.
struct BasisSet {
    LatticeSpec lattice;
    bool symmetric = false;
    std::vector<std::shared_ptr<const SectorBasis>> sectors;

    std::size_t total_dimension() const;
    int largest_sector() const;
};

BasisSet build_bases(const LatticeSpec& lattice, bool use_symmetry, const EdOptions& options = {});

class SectorSpectrum {
public:
    SectorSpectrum(std::shared_ptr<const SectorBasis> basis, const ModelParams& params,
                   Eigen::VectorXd energies, Eigen::MatrixXcd vectors);

    const SectorLabel& label() const noexcept { return basis_->label; }
    int dim() const noexcept { return basis_->dim(); }
    const SectorBasis& basis() const noexcept { return *basis_; }
    std::shared_ptr<const SectorBasis> basis_ptr() const noexcept { return basis_; }
    const Eigen::VectorXd& energies() const noexcept { return energies_; }
    const Eigen::MatrixXcd& vectors() const noexcept { return vectors_; }

    // <n|O|n> for every eigenstate n, ascending in energy.
    const Eigen::VectorXd& eigen_expectations(Observable obs) const;

    // Dense matrix of an observable in this sector's basis.
    Eigen::MatrixXcd observable_matrix(Observable obs) const;

private:
    std::shared_ptr<const SectorBasis> basis_;
    ModelParams params_;
    Eigen::VectorXd energies_;
    Eigen::MatrixXcd vectors_;
    std::array<Eigen::VectorXd, kAllObservables.size()> expectations_;
};

struct Spectrum {
    LatticeSpec lattice;
    ModelParams params;
    bool symmetric = false;
    std::vector<SectorSpectrum> sectors;

    double ground_energy() const;
    std::size_t dimension() const;
};

// Throws ResourceLimitError when the lattice exceeds the configured limit.
Spectrum diagonalize(const LatticeSpec& lattice, const ModelParams& params, bool use_symmetry,
                     const EdOptions& options = {});
Spectrum diagonalize(const BasisSet& bases, const ModelParams& params, int threads = 1);

// Dense Hamiltonian block in a sector basis: -J*diag(zz) - h*X.
Eigen::MatrixXcd hamiltonian_block(const SectorBasis& basis, const ModelParams& params);

double log_partition_function(const Spectrum& spectrum, double T);
double thermal_expectation(const Spectrum& spectrum, double T, Observable obs);
double binder_cumulant(const Spectrum& spectrum, double T);
// dE/dT = (<H^2> - <H>^2) / T^2.
double heat_capacity(const Spectrum& spectrum, double T);

struct GroundStateValue {
    double value = 0.0;
    int degeneracy = 1;
    bool degenerate = false;
};

// Uniform average over an orthonormal basis of the ground manifold, with
// levels clustered at relative gap `cluster_tol`.
GroundStateValue ground_state_expectation(const Spectrum& spectrum, Observable obs,
                                          double cluster_tol = 1e-10);

struct EnergyPoint {
    double T;
    double E;
};

std::vector<EnergyPoint> energy_vs_temperature(const Spectrum& spectrum, std::span<const double> T_grid);

// Eigenvalues and eigenvectors cached on disk keyed by (L, J, h, symmetry).
// Bases are rebuilt on load; they are a pure function of L.
class SpectrumCache {
public:
    explicit SpectrumCache(CacheDir& dir) : dir_(dir) {}

    std::optional<Spectrum> load(const BasisSet& bases, const ModelParams& params) const;
    void store(const Spectrum& spectrum);

    // Cached diagonalization.
    Spectrum get(const BasisSet& bases, const ModelParams& params, int threads = 1);

    static std::string key(int L, const ModelParams& params, bool symmetric);

private:
    CacheDir& dir_;
};

} // namespace tfim::ed
