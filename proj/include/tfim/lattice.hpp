#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace tfim {

// Unordered site pair for one lattice edge. On the 2-torus the same pair
// appears twice (left/right and up/down edges coincide).
struct Bond {
    int a;
    int b;
    friend bool operator==(const Bond&, const Bond&) = default;
};

// L x L periodic square lattice.
//
// Sites are indexed row-major (index = y*L + x). Bonds are listed per site in
// ascending index order, the rightward edge before the upward edge, so the
// list has exactly 2*L*L entries.
class LatticeSpec {
public:
    int L() const noexcept { return L_; }
    int n_sites() const noexcept { return L_ * L_; }
    int n_bonds() const noexcept { return static_cast<int>(bonds_.size()); }
    std::span<const Bond> bonds() const noexcept { return bonds_; }
    const Bond& bond(int b) const { return bonds_[b]; }

    // Four neighbour entries per site, one per incident bond (duplicates on L = 2).
    std::span<const int> neighbours(int site) const {
        return {neighbours_.data() + 4 * site, 4};
    }

    int site(int x, int y) const noexcept { return y * L_ + x; }
    std::array<int, 2> coords(int site) const noexcept { return {site % L_, site / L_}; }

    // L = 2: every site pair is joined by two distinct edges.
    bool degenerate_torus() const noexcept { return L_ == 2; }

    friend bool operator==(const LatticeSpec&, const LatticeSpec&) = default;

private:
    friend LatticeSpec build_lattice(int L);

    int L_ = 0;
    std::vector<Bond> bonds_;
    std::vector<int> neighbours_;
};

struct ModelParams {
    double J = 1.0;
    double h = 0.0;
};

struct ThermalPoint {
    double h;
    double T;
};

// Initial condition plus final field. ground_state = true selects T_i = 0.
struct QuenchSpec {
    double h_i = 0.0;
    double T_i = 1.0;
    double h_f = 0.0;
    bool ground_state = false;
};

void validate(const ModelParams& params);
void validate(const ThermalPoint& point);
void validate(const QuenchSpec& quench);

// Throws InvalidArgument for L < 2.
LatticeSpec build_lattice(int L);

// -J * (bond count); only defined at h = 0.
double classical_ground_energy(const LatticeSpec& lattice, const ModelParams& params);

// Site permutations of the translation group. Entry t = ay*L + ax holds the
// image of every site under the shift (x, y) -> (x + ax, y + ay).
struct TranslationTable {
    int L = 0;
    std::vector<std::vector<int>> perms;

    int size() const noexcept { return static_cast<int>(perms.size()); }
    int index(int ax, int ay) const noexcept { return ay * L + ax; }
};

TranslationTable translation_orbits(const LatticeSpec& lattice);

} // namespace tfim
