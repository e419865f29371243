#include "scmal/random.hpp"

namespace scmal {

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys)
{
    std::uint64_t h = splitmix64(base);
    for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
    return h;
}

Eigen::VectorXd standard_normals(Eigen::Index count, Rng& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd out(count);
    for (Eigen::Index i = 0; i < count; ++i) out[i] = normal(rng);
    return out;
}

}  // namespace scmal
