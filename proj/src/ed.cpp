#include "tfim/ed.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "tfim/cache.hpp"
#include "tfim/errors.hpp"
#include "tfim/parallel.hpp"

namespace tfim::ed {

namespace {

constexpr std::size_t index_of(Observable obs) { return static_cast<std::size_t>(obs); }

double zz_of(const LatticeSpec& lattice, std::uint32_t state) {
    double zz = 0.0;
    for (const auto& [a, b] : lattice.bonds())
        zz += (((state >> a) ^ (state >> b)) & 1u) ? -1.0 : 1.0;
    return zz;
}

double mz_of(int n_sites, std::uint32_t state) {
    return static_cast<double>(n_sites - 2 * std::popcount(state));
}

std::uint32_t apply(const std::vector<int>& perm, bool flip, std::uint32_t state, std::uint32_t mask) {
    std::uint32_t out = 0;
    for (std::size_t i = 0; i < perm.size(); ++i)
        if ((state >> i) & 1u) out |= 1u << perm[i];
    return flip ? (out ^ mask) : out;
}

void fill_diagonals(const LatticeSpec& lattice, SectorBasis& basis) {
    basis.n_sites = lattice.n_sites();
    basis.zz.resize(basis.representatives.size());
    basis.mz.resize(basis.representatives.size());
    for (std::size_t j = 0; j < basis.representatives.size(); ++j) {
        basis.zz[j] = zz_of(lattice, basis.representatives[j]);
        basis.mz[j] = mz_of(lattice.n_sites(), basis.representatives[j]);
    }
}

BasisSet build_full_basis(const LatticeSpec& lattice) {
    const int n = lattice.n_sites();
    const std::uint32_t n_states = 1u << n;
    auto basis = std::make_shared<SectorBasis>();
    basis->label.full = true;
    basis->representatives.resize(n_states);
    basis->stabilizer_size.assign(n_states, 1);
    for (std::uint32_t s = 0; s < n_states; ++s) basis->representatives[s] = s;
    fill_diagonals(lattice, *basis);
    std::vector<Eigen::Triplet<Complex>> triplets;
    triplets.reserve(static_cast<std::size_t>(n_states) * n);
    for (std::uint32_t s = 0; s < n_states; ++s)
        for (int i = 0; i < n; ++i) triplets.emplace_back(static_cast<int>(s ^ (1u << i)), static_cast<int>(s), 1.0);
    basis->x_sum.resize(n_states, n_states);
    basis->x_sum.setFromTriplets(triplets.begin(), triplets.end());
    return BasisSet{lattice, false, {std::move(basis)}};
}

BasisSet build_symmetric_bases(const LatticeSpec& lattice) {
    const int L = lattice.L();
    const int n = lattice.n_sites();
    const std::uint32_t n_states = 1u << n;
    const std::uint32_t mask = n_states - 1;
    const auto translations = translation_orbits(lattice);
    const int n_group = 2 * translations.size();

    // Group element g = 2*t + f: translation t followed by an optional flip.
    std::vector<std::int32_t> orbit_of(n_states, -1);
    std::vector<std::uint8_t> element_of(n_states, 0);
    std::vector<std::uint32_t> reps;
    std::vector<std::vector<int>> stabilizers;
    for (std::uint32_t s = 0; s < n_states; ++s) {
        if (orbit_of[s] >= 0) continue;
        const auto orbit = static_cast<std::int32_t>(reps.size());
        reps.push_back(s);
        stabilizers.emplace_back();
        for (int g = 0; g < n_group; ++g) {
            const std::uint32_t image = apply(translations.perms[g / 2], g % 2 == 1, s, mask);
            if (image == s) stabilizers.back().push_back(g);
            if (orbit_of[image] < 0) {
                orbit_of[image] = orbit;
                element_of[image] = static_cast<std::uint8_t>(g);
            }
        }
    }

    std::vector<Complex> phase(L);
    for (int j = 0; j < L; ++j) phase[j] = std::polar(1.0, 2.0 * std::numbers::pi * j / L);
    auto character = [&](int kx, int ky, int parity, int g) {
        const int t = g / 2;
        const int ax = t % L;
        const int ay = t / L;
        const Complex chi = phase[(kx * ax + ky * ay) % L];
        return (g % 2 == 1) ? chi * static_cast<double>(parity) : chi;
    };

    BasisSet set{lattice, true, {}};
    std::vector<int> local(reps.size());
    for (int kx = 0; kx < L; ++kx) {
        for (int ky = 0; ky < L; ++ky) {
            for (int parity : {1, -1}) {
                auto basis = std::make_shared<SectorBasis>();
                basis->label = SectorLabel{kx, ky, parity, false};
                std::fill(local.begin(), local.end(), -1);
                for (std::size_t o = 0; o < reps.size(); ++o) {
                    const bool compatible = std::all_of(stabilizers[o].begin(), stabilizers[o].end(), [&](int g) {
                        return std::abs(character(kx, ky, parity, g) - 1.0) < 1e-9;
                    });
                    if (!compatible) continue;
                    local[o] = basis->dim();
                    basis->representatives.push_back(reps[o]);
                    basis->stabilizer_size.push_back(static_cast<int>(stabilizers[o].size()));
                }
                if (basis->dim() == 0) continue;
                fill_diagonals(lattice, *basis);

                std::vector<Eigen::Triplet<Complex>> triplets;
                for (std::size_t o = 0; o < reps.size(); ++o) {
                    if (local[o] < 0) continue;
                    for (int i = 0; i < n; ++i) {
                        const std::uint32_t target = reps[o] ^ (1u << i);
                        const auto o2 = static_cast<std::size_t>(orbit_of[target]);
                        if (local[o2] < 0) continue;
                        const double ratio = std::sqrt(static_cast<double>(stabilizers[o2].size()) /
                                                       static_cast<double>(stabilizers[o].size()));
                        triplets.emplace_back(local[o2], local[o],
                                              character(kx, ky, parity, element_of[target]) * ratio);
                    }
                }
                basis->x_sum.resize(basis->dim(), basis->dim());
                basis->x_sum.setFromTriplets(triplets.begin(), triplets.end());
                set.sectors.push_back(std::move(basis));
            }
        }
    }
    return set;
}

// exp(-(E - E0)/T) weights for all levels of all sectors.
template <class Fn>
void for_each_weighted(const Spectrum& spectrum, double T, Fn&& fn) {
    if (!(T > 0.0)) throw InvalidArgument("temperature must be > 0");
    const double e0 = spectrum.ground_energy();
    for (const auto& sector : spectrum.sectors) {
        const auto& energies = sector.energies();
        for (Eigen::Index i = 0; i < energies.size(); ++i)
            fn(sector, i, std::exp(-(energies[i] - e0) / T));
    }
}

} // namespace

std::string_view name(Observable obs) {
    switch (obs) {
    case Observable::identity: return "identity";
    case Observable::total_energy: return "total_energy";
    case Observable::zz_bond_sum: return "zz_bond_sum";
    case Observable::x_sum: return "x_sum";
    case Observable::M2: return "M2";
    case Observable::M4: return "M4";
    case Observable::C_nn: return "C_nn";
    }
    return "unknown";
}

Observable observable_from_name(std::string_view text) {
    for (auto obs : kAllObservables)
        if (name(obs) == text) return obs;
    throw InvalidArgument("unknown observable '" + std::string(text) + "'");
}

std::string SectorLabel::str() const {
    if (full) return "full";
    std::ostringstream out;
    out << "k=(" << kx << "," << ky << ") p=" << (parity > 0 ? "+" : "-");
    return out.str();
}

std::size_t BasisSet::total_dimension() const {
    std::size_t total = 0;
    for (const auto& s : sectors) total += static_cast<std::size_t>(s->dim());
    return total;
}

int BasisSet::largest_sector() const {
    int largest = 0;
    for (const auto& s : sectors) largest = std::max(largest, s->dim());
    return largest;
}

BasisSet build_bases(const LatticeSpec& lattice, bool use_symmetry, const EdOptions& options) {
    const int limit = use_symmetry ? options.max_sites_symmetric : options.max_sites_dense;
    if (lattice.n_sites() > limit || lattice.n_sites() > 30) {
        throw ResourceLimitError("exact diagonalization limited to " + std::to_string(limit) + " sites (" +
                                 (use_symmetry ? "symmetry-reduced" : "dense") + "), lattice has " +
                                 std::to_string(lattice.n_sites()));
    }
    return use_symmetry ? build_symmetric_bases(lattice) : build_full_basis(lattice);
}

Eigen::MatrixXcd hamiltonian_block(const SectorBasis& basis, const ModelParams& params) {
    Eigen::MatrixXcd h = Eigen::MatrixXcd(basis.x_sum) * Complex(-params.h);
    for (int j = 0; j < basis.dim(); ++j) h(j, j) += -params.J * basis.zz[j];
    return h;
}

SectorSpectrum::SectorSpectrum(std::shared_ptr<const SectorBasis> basis, const ModelParams& params,
                               Eigen::VectorXd energies, Eigen::MatrixXcd vectors)
    : basis_(std::move(basis)), params_(params), energies_(std::move(energies)), vectors_(std::move(vectors)) {
    const auto& b = *basis_;
    const Eigen::MatrixXd weights = vectors_.cwiseAbs2();
    const Eigen::Index dim = b.dim();
    Eigen::VectorXd zz = Eigen::Map<const Eigen::VectorXd>(b.zz.data(), dim);
    Eigen::VectorXd mz = Eigen::Map<const Eigen::VectorXd>(b.mz.data(), dim);
    const double sites = b.n_sites;
    const Eigen::VectorXd m2 = mz.array().square() / (sites * sites);

    expectations_[index_of(Observable::identity)] = Eigen::VectorXd::Ones(dim);
    expectations_[index_of(Observable::total_energy)] = energies_;
    expectations_[index_of(Observable::zz_bond_sum)] = weights.transpose() * zz;
    expectations_[index_of(Observable::M2)] = weights.transpose() * m2;
    expectations_[index_of(Observable::M4)] = weights.transpose() * m2.array().square().matrix();
    expectations_[index_of(Observable::C_nn)] = expectations_[index_of(Observable::zz_bond_sum)] / sites;
    const Eigen::MatrixXcd xv = b.x_sum * vectors_;
    expectations_[index_of(Observable::x_sum)] = vectors_.conjugate().cwiseProduct(xv).colwise().sum().real().transpose();
}

const Eigen::VectorXd& SectorSpectrum::eigen_expectations(Observable obs) const {
    return expectations_[index_of(obs)];
}

Eigen::MatrixXcd SectorSpectrum::observable_matrix(Observable obs) const {
    const auto& b = *basis_;
    const Eigen::Index dim = b.dim();
    const double sites = b.n_sites;
    Eigen::VectorXd diag(dim);
    switch (obs) {
    case Observable::identity: return Eigen::MatrixXcd::Identity(dim, dim);
    case Observable::total_energy: return hamiltonian_block(b, params_);
    case Observable::x_sum: return Eigen::MatrixXcd(b.x_sum);
    case Observable::zz_bond_sum:
        for (Eigen::Index j = 0; j < dim; ++j) diag[j] = b.zz[j];
        break;
    case Observable::C_nn:
        for (Eigen::Index j = 0; j < dim; ++j) diag[j] = b.zz[j] / sites;
        break;
    case Observable::M2:
        for (Eigen::Index j = 0; j < dim; ++j) diag[j] = std::pow(b.mz[j] / sites, 2);
        break;
    case Observable::M4:
        for (Eigen::Index j = 0; j < dim; ++j) diag[j] = std::pow(b.mz[j] / sites, 4);
        break;
    }
    return diag.cast<Complex>().asDiagonal();
}

double Spectrum::ground_energy() const {
    double e0 = std::numeric_limits<double>::infinity();
    for (const auto& s : sectors)
        if (s.energies().size() > 0) e0 = std::min(e0, s.energies()[0]);
    return e0;
}

std::size_t Spectrum::dimension() const {
    std::size_t total = 0;
    for (const auto& s : sectors) total += static_cast<std::size_t>(s.dim());
    return total;
}

Spectrum diagonalize(const BasisSet& bases, const ModelParams& params, int threads) {
    validate(params);
    std::vector<std::optional<SectorSpectrum>> slots(bases.sectors.size());
    parallel_for(bases.sectors.size(), threads, [&](std::size_t i) {
        const auto& basis = bases.sectors[i];
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(hamiltonian_block(*basis, params));
        if (solver.info() != Eigen::Success)
            throw std::runtime_error("eigensolver failed in sector " + basis->label.str());
        slots[i].emplace(basis, params, solver.eigenvalues(), solver.eigenvectors());
    });
    Spectrum spectrum{bases.lattice, params, bases.symmetric, {}};
    spectrum.sectors.reserve(slots.size());
    for (auto& slot : slots) spectrum.sectors.push_back(std::move(*slot));
    return spectrum;
}

Spectrum diagonalize(const LatticeSpec& lattice, const ModelParams& params, bool use_symmetry,
                     const EdOptions& options) {
    return diagonalize(build_bases(lattice, use_symmetry, options), params, options.threads);
}

double log_partition_function(const Spectrum& spectrum, double T) {
    double z = 0.0;
    for_each_weighted(spectrum, T, [&](const SectorSpectrum&, Eigen::Index, double w) { z += w; });
    return std::log(z) - spectrum.ground_energy() / T;
}

double thermal_expectation(const Spectrum& spectrum, double T, Observable obs) {
    double z = 0.0;
    double acc = 0.0;
    for_each_weighted(spectrum, T, [&](const SectorSpectrum& sector, Eigen::Index i, double w) {
        z += w;
        acc += w * sector.eigen_expectations(obs)[i];
    });
    return acc / z;
}

double binder_cumulant(const Spectrum& spectrum, double T) {
    const double m2 = thermal_expectation(spectrum, T, Observable::M2);
    const double m4 = thermal_expectation(spectrum, T, Observable::M4);
    return 1.0 - m4 / (3.0 * m2 * m2);
}

double heat_capacity(const Spectrum& spectrum, double T) {
    double z = 0.0;
    double e1 = 0.0;
    double e2 = 0.0;
    const double e0 = spectrum.ground_energy();
    for_each_weighted(spectrum, T, [&](const SectorSpectrum& sector, Eigen::Index i, double w) {
        const double de = sector.energies()[i] - e0;
        z += w;
        e1 += w * de;
        e2 += w * de * de;
    });
    e1 /= z;
    e2 /= z;
    return (e2 - e1 * e1) / (T * T);
}

GroundStateValue ground_state_expectation(const Spectrum& spectrum, Observable obs, double cluster_tol) {
    const double e0 = spectrum.ground_energy();
    const double tol = cluster_tol * std::max(1.0, std::abs(e0));
    GroundStateValue out;
    out.degeneracy = 0;
    double acc = 0.0;
    for (const auto& sector : spectrum.sectors) {
        const auto& energies = sector.energies();
        for (Eigen::Index i = 0; i < energies.size() && energies[i] - e0 <= tol; ++i) {
            acc += sector.eigen_expectations(obs)[i];
            ++out.degeneracy;
        }
    }
    out.value = acc / out.degeneracy;
    out.degenerate = out.degeneracy > 1;
    return out;
}

std::vector<EnergyPoint> energy_vs_temperature(const Spectrum& spectrum, std::span<const double> T_grid) {
    std::vector<EnergyPoint> table;
    table.reserve(T_grid.size());
    for (double T : T_grid) table.push_back({T, thermal_expectation(spectrum, T, Observable::total_energy)});
    return table;
}

namespace {

constexpr char kMagic[8] = {'T', 'F', 'I', 'M', 'S', 'P', 'E', 'C'};
constexpr std::uint32_t kFormatVersion = 1;

template <class T>
void put(std::string& out, const T& value) {
    out.append(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T take(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw std::runtime_error("truncated spectrum cache entry");
    T value;
    std::memcpy(&value, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return value;
}

std::string hex_bits(double x) {
    std::ostringstream out;
    out << std::hex << std::bit_cast<std::uint64_t>(x);
    return out.str();
}

} // namespace

std::string SpectrumCache::key(int L, const ModelParams& params, bool symmetric) {
    return std::string("spectrum_") + kEngineVersion + "_L" + std::to_string(L) + "_J" + hex_bits(params.J) + "_h" +
           hex_bits(params.h) + (symmetric ? "_sym" : "_full") + ".bin";
}

void SpectrumCache::store(const Spectrum& spectrum) {
    std::string out(kMagic, sizeof(kMagic));
    put(out, kFormatVersion);
    put(out, static_cast<std::int32_t>(spectrum.lattice.L()));
    put(out, spectrum.params.J);
    put(out, spectrum.params.h);
    put(out, static_cast<std::uint8_t>(spectrum.symmetric));
    put(out, static_cast<std::uint32_t>(spectrum.sectors.size()));
    for (const auto& sector : spectrum.sectors) {
        const auto& label = sector.label();
        put(out, static_cast<std::int32_t>(label.kx));
        put(out, static_cast<std::int32_t>(label.ky));
        put(out, static_cast<std::int32_t>(label.parity));
        put(out, static_cast<std::uint8_t>(label.full));
        put(out, static_cast<std::int32_t>(sector.dim()));
        out.append(reinterpret_cast<const char*>(sector.energies().data()), sizeof(double) * sector.dim());
        out.append(reinterpret_cast<const char*>(sector.vectors().data()),
                   sizeof(Complex) * static_cast<std::size_t>(sector.dim()) * sector.dim());
    }
    dir_.store(key(spectrum.lattice.L(), spectrum.params, spectrum.symmetric), out);
}

std::optional<Spectrum> SpectrumCache::load(const BasisSet& bases, const ModelParams& params) const {
    const auto bytes = dir_.load(key(bases.lattice.L(), params, bases.symmetric));
    if (!bytes) return std::nullopt;
    const std::string& in = *bytes;
    if (in.size() < sizeof(kMagic) || std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0) return std::nullopt;
    std::size_t pos = sizeof(kMagic);
    if (take<std::uint32_t>(in, pos) != kFormatVersion) return std::nullopt;
    if (take<std::int32_t>(in, pos) != bases.lattice.L()) return std::nullopt;
    const double J = take<double>(in, pos);
    const double h = take<double>(in, pos);
    if (J != params.J || h != params.h) return std::nullopt;
    if (static_cast<bool>(take<std::uint8_t>(in, pos)) != bases.symmetric) return std::nullopt;
    const auto n_sectors = take<std::uint32_t>(in, pos);
    if (n_sectors != bases.sectors.size()) return std::nullopt;
    Spectrum spectrum{bases.lattice, params, bases.symmetric, {}};
    for (std::uint32_t s = 0; s < n_sectors; ++s) {
        SectorLabel label;
        label.kx = take<std::int32_t>(in, pos);
        label.ky = take<std::int32_t>(in, pos);
        label.parity = take<std::int32_t>(in, pos);
        label.full = take<std::uint8_t>(in, pos) != 0;
        const auto dim = take<std::int32_t>(in, pos);
        const auto& basis = bases.sectors[s];
        if (!(label == basis->label) || dim != basis->dim()) return std::nullopt;
        const std::size_t need = sizeof(double) * dim + sizeof(Complex) * static_cast<std::size_t>(dim) * dim;
        if (pos + need > in.size()) return std::nullopt;
        Eigen::VectorXd energies(dim);
        Eigen::MatrixXcd vectors(dim, dim);
        std::memcpy(energies.data(), in.data() + pos, sizeof(double) * dim);
        pos += sizeof(double) * dim;
        std::memcpy(vectors.data(), in.data() + pos, sizeof(Complex) * static_cast<std::size_t>(dim) * dim);
        pos += sizeof(Complex) * static_cast<std::size_t>(dim) * dim;
        spectrum.sectors.emplace_back(basis, params, std::move(energies), std::move(vectors));
    }
    return spectrum;
}

Spectrum SpectrumCache::get(const BasisSet& bases, const ModelParams& params, int threads) {
    if (auto hit = load(bases, params)) return std::move(*hit);
    Spectrum spectrum = diagonalize(bases, params, threads);
    store(spectrum);
    return spectrum;
}

} // namespace tfim::ed
