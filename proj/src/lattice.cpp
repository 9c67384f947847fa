#include "tfim/lattice.hpp"

#include <cmath>
#include <string>

#include "tfim/errors.hpp"

namespace tfim {

void validate(const ModelParams& params) {
    if (!std::isfinite(params.J) || !std::isfinite(params.h))
        throw InvalidArgument("model parameters must be finite");
    if (params.h < 0.0)
        throw InvalidArgument("transverse field h must be >= 0, got " + std::to_string(params.h));
}

void validate(const ThermalPoint& point) {
    if (!(point.T > 0.0) || !std::isfinite(point.T))
        throw InvalidArgument("temperature must be > 0, got " + std::to_string(point.T));
    if (!(point.h >= 0.0))
        throw InvalidArgument("transverse field h must be >= 0");
}

void validate(const QuenchSpec& quench) {
    if (!(quench.h_i >= 0.0) || !(quench.h_f >= 0.0))
        throw InvalidArgument("quench fields must be >= 0");
    if (!quench.ground_state && !(quench.T_i > 0.0))
        throw InvalidArgument("initial temperature must be > 0 unless the ground-state flag is set");
}

LatticeSpec build_lattice(int L) {
    if (L < 2)
        throw InvalidArgument("lattice size L must be >= 2, got " + std::to_string(L));
    LatticeSpec lat;
    lat.L_ = L;
    const int n = L * L;
    lat.bonds_.reserve(2 * n);
    for (int s = 0; s < n; ++s) {
        const int x = s % L;
        const int y = s / L;
        lat.bonds_.push_back({s, y * L + (x + 1) % L});
        lat.bonds_.push_back({s, ((y + 1) % L) * L + x});
    }
    lat.neighbours_.assign(4 * n, -1);
    std::vector<int> fill(n, 0);
    for (const auto& [a, b] : lat.bonds_) {
        lat.neighbours_[4 * a + fill[a]++] = b;
        lat.neighbours_[4 * b + fill[b]++] = a;
    }
    return lat;
}

double classical_ground_energy(const LatticeSpec& lattice, const ModelParams& params) {
    if (params.h != 0.0)
        throw InvalidArgument("classical ground energy requires h = 0");
    return -params.J * lattice.n_bonds();
}

TranslationTable translation_orbits(const LatticeSpec& lattice) {
    const int L = lattice.L();
    TranslationTable table;
    table.L = L;
    table.perms.resize(L * L);
    for (int ay = 0; ay < L; ++ay) {
        for (int ax = 0; ax < L; ++ax) {
            auto& perm = table.perms[table.index(ax, ay)];
            perm.resize(L * L);
            for (int s = 0; s < L * L; ++s) {
                const auto [x, y] = lattice.coords(s);
                perm[s] = lattice.site((x + ax) % L, (y + ay) % L);
            }
        }
    }
    return table;
}

} // namespace tfim
