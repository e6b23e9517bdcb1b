#pragma once

#include <varlex/dataset.hpp>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>

namespace varlex {

/// Two-or-more-class expression data: a shared low-rank background, a sparse
/// signature per class, scattered per-sample spikes and Gaussian noise.
///
/// Each class owns `signature_genes` genes (disjoint across classes) with a
/// fixed sign per gene. A sample of that class expresses each of its class's
/// signature genes independently with probability `signature_rate`, at a
/// magnitude drawn from [signature_low, signature_high]. Because expression is
/// sample-specific, the signature block is sparse rather than low rank.
struct SyntheticSpec {
    Index genes       = 500;
    Index samples     = 60;
    int classes       = 2;
    Index background_rank = 2;
    double background_scale = 1.0;
    Index signature_genes   = 40;
    double signature_rate   = 0.6;
    double signature_low    = 2.0;
    double signature_high   = 4.0;
    double spike_rate       = 0.01; ///< fraction of cells carrying a class-agnostic spike
    double spike_magnitude  = 3.0;
    double noise_sd         = 0.1;
    std::uint64_t seed      = 1;
};

namespace detail {

/// Uniform [0,1) and standard normal variates from raw mt19937_64 output, so
/// generated data is identical across standard library implementations.
class PortableRng {
  public:
    explicit PortableRng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0)
            u1 = uniform();
        const double u2 = uniform();
        const double r  = std::sqrt(-2.0 * std::log(u1));
        spare_     = r * std::sin(2 * std::numbers::pi * u2);
        has_spare_ = true;
        return r * std::cos(2 * std::numbers::pi * u2);
    }

    std::uint64_t below(std::uint64_t bound) { return engine_() % bound; }

  private:
    std::mt19937_64 engine_;
    double spare_   = 0;
    bool has_spare_ = false;
};

} // namespace detail

/// Ground truth alongside the generated dataset.
struct SyntheticData {
    ExpressionDataset dataset;
    Matrix background;  ///< low-rank part
    Matrix signature;   ///< class-specific sparse part
    Matrix spikes;      ///< class-agnostic sparse part
};

inline SyntheticData make_synthetic(const SyntheticSpec &spec) {
    if (spec.classes < 2 || spec.samples < spec.classes ||
        spec.signature_genes * spec.classes > spec.genes)
        throw std::invalid_argument("make_synthetic: inconsistent specification");
    detail::PortableRng rng(spec.seed);
    const Index m = spec.genes, n = spec.samples;

    SyntheticData out;
    Matrix U(m, spec.background_rank), V(spec.background_rank, n);
    for (Index i = 0; i < U.size(); ++i)
        U.data()[i] = rng.normal();
    for (Index i = 0; i < V.size(); ++i)
        V.data()[i] = rng.normal();
    out.background = spec.background_scale * U * V;

    // balanced labels, classes interleaved in sample order
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j)
        labels[static_cast<std::size_t>(j)] = static_cast<int>(j % spec.classes);

    // disjoint signature gene sets from a shuffled gene order
    std::vector<Index> genes(static_cast<std::size_t>(m));
    std::iota(genes.begin(), genes.end(), Index{0});
    for (std::size_t i = genes.size(); i > 1; --i)
        std::swap(genes[i - 1], genes[static_cast<std::size_t>(rng.below(i))]);
    std::vector<double> sign(static_cast<std::size_t>(m));
    for (auto &s : sign)
        s = rng.uniform() < 0.5 ? -1.0 : 1.0;

    out.signature = Matrix::Zero(m, n);
    for (Index j = 0; j < n; ++j) {
        const int c = labels[static_cast<std::size_t>(j)];
        for (Index g = 0; g < spec.signature_genes; ++g) {
            const Index gene = genes[static_cast<std::size_t>(c * spec.signature_genes + g)];
            if (rng.uniform() < spec.signature_rate) {
                const double mag = spec.signature_low +
                                   (spec.signature_high - spec.signature_low) * rng.uniform();
                out.signature(gene, j) = sign[static_cast<std::size_t>(gene)] * mag;
            }
        }
    }

    out.spikes = Matrix::Zero(m, n);
    for (Index i = 0; i < out.spikes.size(); ++i)
        if (rng.uniform() < spec.spike_rate)
            out.spikes.data()[i] = rng.uniform() < 0.5 ? -spec.spike_magnitude : spec.spike_magnitude;

    Matrix noise(m, n);
    for (Index i = 0; i < noise.size(); ++i)
        noise.data()[i] = spec.noise_sd * rng.normal();

    auto &ds  = out.dataset;
    ds.values = out.background + out.signature + out.spikes + noise;
    for (Index g = 0; g < m; ++g)
        ds.gene_ids.push_back("g" + std::to_string(g + 1));
    for (Index j = 0; j < n; ++j)
        ds.sample_ids.push_back("s" + std::to_string(j + 1));
    for (int c = 0; c < spec.classes; ++c)
        ds.class_names.push_back(spec.classes == 2 ? (c == 0 ? "normal" : "tumor")
                                                   : "class" + std::to_string(c + 1));
    ds.labels = labels;
    ds.validate();
    return out;
}

} // namespace varlex
