#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tlbench/tensor.hpp"

namespace tlbench {

class Rng;

enum class Architecture : std::uint32_t { Vanilla = 1, Informer = 2, PatchTST = 3 };

std::string_view architecture_name(Architecture arch);
/// Accepts "vanilla", "informer", "patchtst" (case-insensitive).
Architecture parse_architecture(std::string_view name);

struct ModelConfig {
    Architecture arch = Architecture::Vanilla;
    std::size_t d_model = 32;
    std::size_t n_heads = 4;
    std::size_t n_encoder_layers = 2;
    std::size_t n_decoder_layers = 1;
    std::size_t ff_dim = 64;
    double dropout_rate = 0.1;
    std::size_t lookback = 168;
    std::size_t horizon = 24;
    /// Width F of one input time step (load + covariate channels).
    std::size_t input_width = 1;
    std::size_t patch_len = 16;
    std::size_t stride = 8;
    double probsparse_factor = 5.0;
    /// Lifts the {24, 96} horizon restriction (toy models, tests).
    bool allow_any_horizon = false;

    bool operator==(const ModelConfig&) const = default;
};

/// Throws ConfigError describing the first violated constraint.
void validate(const ModelConfig& config);

/// Fixed sinusoidal positional table, shape [length, d_model], rows
/// [offset, offset + length).
Tensor sinusoidal_positions(std::size_t offset, std::size_t length, std::size_t d_model);

/// softmax(Q K^T / sqrt(d_k)) V. Accepts [L, d] or batched [N, L, d] operands.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// Number of keys scored and queries selected by ProbSparse attention:
/// min(L, ceil(c * ln L)), at least one.
std::size_t probsparse_budget(std::size_t length, double factor);

/// Distinct key positions used to score queries: a prefix of a seeded random
/// permutation of [0, key_len), sorted ascending. Larger budgets therefore
/// score a superset of the keys scored by smaller ones.
std::vector<std::size_t> probsparse_key_sample(std::size_t key_len, std::size_t budget, std::uint64_t seed);

/// Informer-style ProbSparse attention. Each query is scored by the max minus
/// the mean of its scaled scores q.k_j / sqrt(d_k) over the sampled keys; the
/// top-u queries receive full attention over all keys and the remaining rows
/// output the mean of V along the sequence. Ties keep the lower query index.
Tensor prob_sparse_attention(const Tensor& q, const Tensor& k, const Tensor& v, double factor,
                             std::uint64_t sample_seed = 0);

struct NamedParameter {
    std::string name;
    Tensor value;
};

/// One of the three forecasters behind a common windowed interface:
/// x_past [B, L, F] -> forecast [B, H].
///
/// Vanilla / Informer: input projection + sinusoidal positions, post-norm
/// encoder layers, then a one-shot decoder over H placeholder positions
/// (learned zero-initialised token + positions L..L+H-1) with self- and
/// cross-attention, and a linear read-out per position. Informer swaps the
/// encoder and decoder self-attention for ProbSparse attention; cross-attention
/// stays full. Both share parameter names, so weights transfer between them.
///
/// PatchTST: patches of the input (all channels flattened per patch) are
/// projected to d_model, encoded, flattened and mapped to H outputs.
class Forecaster {
public:
    Forecaster(ModelConfig config, std::uint64_t seed);

    /// Builds the graph for one batch. `dropout_rng` is required when
    /// train is true and the dropout rate is positive.
    Tensor forward(const Tensor& x_past, bool train, Rng* dropout_rng = nullptr) const;

    const ModelConfig& config() const { return config_; }
    const std::vector<NamedParameter>& parameters() const { return params_; }
    std::vector<Tensor> parameter_tensors() const;
    std::size_t parameter_count() const;
    Tensor parameter(std::string_view name) const;

    Forecaster(Forecaster&&) noexcept = default;
    Forecaster& operator=(Forecaster&&) noexcept = default;
    // Copies would alias parameter storage; use clone().
    Forecaster(const Forecaster&) = delete;
    Forecaster& operator=(const Forecaster&) = delete;

    /// Deep copy (new parameter storage).
    Forecaster clone() const;
    std::uint64_t seed() const { return seed_; }
    /// Copies values from a model with identical parameter names and shapes.
    void copy_parameters_from(const Forecaster& other);

private:
    struct Linear {
        Tensor weight;  // [in, out]
        Tensor bias;    // [out]
    };
    struct Norm {
        Tensor gamma;
        Tensor beta;
    };
    struct Attention {
        Linear q, k, v, o;
        bool sparse = false;
        std::uint64_t sample_seed = 0;
    };
    struct EncoderLayer {
        Attention self_attn;
        Norm norm1;
        Linear ff1, ff2;
        Norm norm2;
    };
    struct DecoderLayer {
        Attention self_attn;
        Norm norm1;
        Attention cross_attn;
        Norm norm2;
        Linear ff1, ff2;
        Norm norm3;
    };

    Linear make_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng);
    Norm make_norm(const std::string& name, std::size_t dim);
    Attention make_attention(const std::string& name, bool sparse, Rng& rng);
    Tensor register_parameter(const std::string& name, Tensor value);

    Tensor apply(const Linear& layer, const Tensor& x) const;
    Tensor apply(const Norm& norm, const Tensor& x) const;
    Tensor apply(const Attention& attn, const Tensor& query_in, const Tensor& kv_in) const;
    Tensor feed_forward(const Linear& ff1, const Linear& ff2, const Tensor& x) const;
    Tensor encode(const Tensor& tokens, bool train, Rng* rng) const;
    Tensor forward_encoder_decoder(const Tensor& x_past, bool train, Rng* rng) const;
    Tensor forward_patch(const Tensor& x_past, bool train, Rng* rng) const;

    ModelConfig config_;
    std::uint64_t seed_ = 0;
    std::vector<NamedParameter> params_;

    Linear input_proj_;
    std::vector<EncoderLayer> encoder_;
    Tensor decoder_token_;
    std::vector<DecoderLayer> decoder_;
    Linear head_;
};

// --- checkpoints -------------------------------------------------------------
//
// Little-endian flat binary:
//   magic   "TLBCKPT1" (8 bytes)
//   u32     format version (1)
//   u32     architecture id
//   u64 x 11 d_model, n_heads, n_encoder_layers, n_decoder_layers, ff_dim,
//            lookback, horizon, input_width, patch_len, stride,
//            allow_any_horizon (0/1)
//   f64 x 2  dropout_rate, probsparse_factor
//   u64     init seed
//   u64     parameter count
//   per parameter, in canonical order:
//     u32 name length, name bytes, u32 rank, u64 dims[rank], f64 values[numel]

void write_checkpoint(std::ostream& out, const Forecaster& model);
void save_checkpoint(const std::filesystem::path& path, const Forecaster& model);
Forecaster read_checkpoint(std::istream& in);
Forecaster load_checkpoint(const std::filesystem::path& path);

} // namespace tlbench
