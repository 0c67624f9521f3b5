#include "tlbench/models.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "tlbench/errors.hpp"
#include "tlbench/rng.hpp"

namespace tlbench {

std::string_view architecture_name(Architecture arch) {
    switch (arch) {
    case Architecture::Vanilla:
        return "vanilla";
    case Architecture::Informer:
        return "informer";
    case Architecture::PatchTST:
        return "patchtst";
    }
    return "unknown";
}

Architecture parse_architecture(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "vanilla" || lower == "transformer") return Architecture::Vanilla;
    if (lower == "informer") return Architecture::Informer;
    if (lower == "patchtst") return Architecture::PatchTST;
    throw ConfigError("unknown architecture '" + std::string(name) + "' (expected vanilla, informer or patchtst)");
}

void validate(const ModelConfig& c) {
    auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
    if (c.d_model == 0) fail("d_model must be positive");
    if (c.n_heads == 0) fail("n_heads must be positive");
    if (c.d_model % c.n_heads != 0) {
        fail("d_model (" + std::to_string(c.d_model) + ") must be divisible by n_heads (" + std::to_string(c.n_heads) +
             ")");
    }
    if (c.n_encoder_layers == 0) fail("n_encoder_layers must be positive");
    if (c.arch != Architecture::PatchTST && c.n_decoder_layers == 0) fail("n_decoder_layers must be positive");
    if (c.ff_dim == 0) fail("ff_dim must be positive");
    if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0)) fail("dropout_rate must lie in [0, 1)");
    if (c.lookback == 0) fail("lookback must be positive");
    if (c.horizon == 0) fail("horizon must be positive");
    if (!c.allow_any_horizon && c.horizon != 24 && c.horizon != 96) {
        fail("horizon must be 24 or 96 (got " + std::to_string(c.horizon) + "); set allow_any_horizon to override");
    }
    if (c.input_width == 0) fail("input_width must be positive");
    if (c.arch == Architecture::PatchTST) {
        if (c.patch_len == 0 || c.stride == 0) fail("patch_len and stride must be positive");
        if (c.patch_len > c.lookback) fail("patch_len must not exceed lookback");
    }
    if (c.arch == Architecture::Informer && !(c.probsparse_factor > 0.0)) fail("probsparse_factor must be positive");
}

Tensor sinusoidal_positions(std::size_t offset, std::size_t length, std::size_t d_model) {
    std::vector<double> table(length * d_model);
    for (std::size_t p = 0; p < length; ++p) {
        const double pos = static_cast<double>(offset + p);
        for (std::size_t i = 0; i < d_model; ++i) {
            const double exponent = static_cast<double>(i - i % 2) / static_cast<double>(d_model);
            const double angle = pos / std::pow(10000.0, exponent);
            table[p * d_model + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return Tensor::from({length, d_model}, std::move(table));
}

namespace {

struct AttentionOperands {
    Tensor q, k, v;
    bool squeezed = false;
};

AttentionOperands promote(const Tensor& q, const Tensor& k, const Tensor& v, const char* op) {
    if (!q.defined() || !k.defined() || !v.defined()) throw ContractError(std::string(op) + ": undefined operand");
    if (q.rank() != k.rank() || q.rank() != v.rank() || (q.rank() != 2 && q.rank() != 3)) {
        throw DimensionError(std::string(op) + ": expected matching rank-2 or rank-3 Q, K, V");
    }
    if (q.dim(-1) != k.dim(-1)) {
        throw DimensionError(std::string(op) + ": Q and K key dimensions differ (" + shape_string(q.shape()) + " vs " +
                             shape_string(k.shape()) + ")");
    }
    if (k.dim(-2) != v.dim(-2)) {
        throw DimensionError(std::string(op) + ": K and V sequence lengths differ (" + shape_string(k.shape()) +
                             " vs " + shape_string(v.shape()) + ")");
    }
    if (q.rank() == 3 && (q.dim(0) != k.dim(0) || k.dim(0) != v.dim(0))) {
        throw DimensionError(std::string(op) + ": batch sizes differ");
    }
    if (q.rank() == 3) return {q, k, v, false};
    return {reshape(q, {1, q.dim(0), q.dim(1)}), reshape(k, {1, k.dim(0), k.dim(1)}),
            reshape(v, {1, v.dim(0), v.dim(1)}), true};
}

Tensor full_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.dim(-1)));
    Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt);
    return matmul(softmax(scores, -1), v);
}

} // namespace

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    auto ops = promote(q, k, v, "scaled_dot_attention");
    Tensor out = full_attention(ops.q, ops.k, ops.v);
    return ops.squeezed ? reshape(out, {q.dim(0), v.dim(-1)}) : out;
}

std::size_t probsparse_budget(std::size_t length, double factor) {
    if (length == 0) return 0;
    const double raw = std::ceil(factor * std::log(static_cast<double>(length)));
    const std::size_t n = raw <= 1.0 ? 1 : static_cast<std::size_t>(raw);
    return std::min(length, n);
}

std::vector<std::size_t> probsparse_key_sample(std::size_t key_len, std::size_t budget, std::uint64_t seed) {
    std::vector<std::size_t> perm(key_len);
    std::iota(perm.begin(), perm.end(), 0);
    if (budget >= key_len) return perm;
    Rng rng(seed, RngStream::KeySample, key_len);
    for (std::size_t i = key_len; i-- > 1;) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i + 1));
        std::swap(perm[i], perm[j]);
    }
    perm.resize(budget);
    std::sort(perm.begin(), perm.end());
    return perm;
}

Tensor prob_sparse_attention(const Tensor& q, const Tensor& k, const Tensor& v, double factor,
                             std::uint64_t sample_seed) {
    if (!(factor > 0.0)) throw ConfigError("prob_sparse_attention: factor must be positive");
    auto ops = promote(q, k, v, "prob_sparse_attention");
    const std::size_t n = ops.q.dim(0);
    const std::size_t lq = ops.q.dim(1);
    const std::size_t lk = ops.k.dim(1);
    const std::size_t dk = ops.q.dim(2);
    const std::size_t top_u = probsparse_budget(lq, factor);
    Tensor out;
    if (top_u >= lq) {
        out = full_attention(ops.q, ops.k, ops.v);
    } else {
        const auto keys = probsparse_key_sample(lk, probsparse_budget(lk, factor), sample_seed);
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
        const double* qd = ops.q.data().data();
        const double* kd = ops.k.data().data();
        std::vector<std::vector<std::size_t>> selected(n);
        std::vector<double> sparsity(lq);
        std::vector<std::size_t> order(lq);
        for (std::size_t s = 0; s < n; ++s) {
            for (std::size_t i = 0; i < lq; ++i) {
                const double* qrow = qd + (s * lq + i) * dk;
                double mx = -INFINITY;
                double total = 0.0;
                for (auto j : keys) {
                    const double* krow = kd + (s * lk + j) * dk;
                    double dot = 0.0;
                    for (std::size_t c = 0; c < dk; ++c) dot += qrow[c] * krow[c];
                    dot *= inv_sqrt;
                    mx = std::max(mx, dot);
                    total += dot;
                }
                sparsity[i] = mx - total / static_cast<double>(keys.size());
            }
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return sparsity[a] > sparsity[b]; });
            selected[s].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top_u));
            std::sort(selected[s].begin(), selected[s].end());
        }
        Tensor active = full_attention(gather_rows(ops.q, selected), ops.k, ops.v);
        Tensor lazy = add(Tensor::zeros({n, lq, ops.v.dim(2)}), mean_axis(ops.v, 1, true));
        out = scatter_rows(lazy, selected, active);
    }
    return ops.squeezed ? reshape(out, {q.dim(0), v.dim(-1)}) : out;
}

// --- Forecaster --------------------------------------------------------------

Forecaster::Forecaster(ModelConfig config, std::uint64_t seed) : config_(config), seed_(seed) {
    validate(config_);
    Rng rng(seed, RngStream::Init);
    const bool sparse = config_.arch == Architecture::Informer;
    const std::size_t d = config_.d_model;
    if (config_.arch == Architecture::PatchTST) {
        input_proj_ = make_linear("input", config_.patch_len * config_.input_width, d, rng);
    } else {
        input_proj_ = make_linear("input", config_.input_width, d, rng);
    }
    for (std::size_t i = 0; i < config_.n_encoder_layers; ++i) {
        const std::string p = "encoder." + std::to_string(i) + ".";
        EncoderLayer layer;
        layer.self_attn = make_attention(p + "self_attn", sparse, rng);
        layer.norm1 = make_norm(p + "norm1", d);
        layer.ff1 = make_linear(p + "ff1", d, config_.ff_dim, rng);
        layer.ff2 = make_linear(p + "ff2", config_.ff_dim, d, rng);
        layer.norm2 = make_norm(p + "norm2", d);
        encoder_.push_back(std::move(layer));
    }
    if (config_.arch == Architecture::PatchTST) {
        const std::size_t patches = patch_count(config_.lookback, config_.patch_len, config_.stride);
        head_ = make_linear("head", patches * d, config_.horizon, rng);
        return;
    }
    decoder_token_ = register_parameter("decoder.token", Tensor::zeros({d}, true));
    for (std::size_t i = 0; i < config_.n_decoder_layers; ++i) {
        const std::string p = "decoder." + std::to_string(i) + ".";
        DecoderLayer layer;
        layer.self_attn = make_attention(p + "self_attn", sparse, rng);
        layer.norm1 = make_norm(p + "norm1", d);
        layer.cross_attn = make_attention(p + "cross_attn", false, rng);
        layer.norm2 = make_norm(p + "norm2", d);
        layer.ff1 = make_linear(p + "ff1", d, config_.ff_dim, rng);
        layer.ff2 = make_linear(p + "ff2", config_.ff_dim, d, rng);
        layer.norm3 = make_norm(p + "norm3", d);
        decoder_.push_back(std::move(layer));
    }
    head_ = make_linear("head", d, 1, rng);
}

Tensor Forecaster::register_parameter(const std::string& name, Tensor value) {
    value.set_requires_grad(true);
    params_.push_back({name, value});
    return value;
}

Forecaster::Linear Forecaster::make_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<double> w(in * out);
    for (auto& x : w) x = rng.uniform(-limit, limit);
    Linear layer;
    layer.weight = register_parameter(name + ".weight", Tensor::from({in, out}, std::move(w)));
    layer.bias = register_parameter(name + ".bias", Tensor::zeros({out}));
    return layer;
}

Forecaster::Norm Forecaster::make_norm(const std::string& name, std::size_t dim) {
    Norm norm;
    norm.gamma = register_parameter(name + ".gamma", Tensor::full({dim}, 1.0));
    norm.beta = register_parameter(name + ".beta", Tensor::zeros({dim}));
    return norm;
}

Forecaster::Attention Forecaster::make_attention(const std::string& name, bool sparse, Rng& rng) {
    const std::size_t d = config_.d_model;
    Attention attn;
    attn.q = make_linear(name + ".q", d, d, rng);
    attn.k = make_linear(name + ".k", d, d, rng);
    attn.v = make_linear(name + ".v", d, d, rng);
    attn.o = make_linear(name + ".o", d, d, rng);
    attn.sparse = sparse;
    attn.sample_seed = seed_ ^ (0x9E3779B97F4A7C15ull * (params_.size() + 1));
    return attn;
}

Tensor Forecaster::apply(const Linear& layer, const Tensor& x) const {
    return add(matmul(x, layer.weight), layer.bias);
}

Tensor Forecaster::apply(const Norm& norm, const Tensor& x) const {
    return layer_norm(x, norm.gamma, norm.beta);
}

Tensor Forecaster::apply(const Attention& attn, const Tensor& query_in, const Tensor& kv_in) const {
    const std::size_t b = query_in.dim(0);
    const std::size_t lq = query_in.dim(1);
    const std::size_t lk = kv_in.dim(1);
    const std::size_t h = config_.n_heads;
    const std::size_t d = config_.d_model;
    const std::size_t dk = d / h;
    auto split_heads = [&](const Tensor& x, std::size_t len) {
        return reshape(permute(reshape(x, {b, len, h, dk}), {0, 2, 1, 3}), {b * h, len, dk});
    };
    Tensor q = split_heads(apply(attn.q, query_in), lq);
    Tensor k = split_heads(apply(attn.k, kv_in), lk);
    Tensor v = split_heads(apply(attn.v, kv_in), lk);
    Tensor ctx = attn.sparse ? prob_sparse_attention(q, k, v, config_.probsparse_factor, attn.sample_seed)
                             : scaled_dot_attention(q, k, v);
    Tensor merged = reshape(permute(reshape(ctx, {b, h, lq, dk}), {0, 2, 1, 3}), {b, lq, d});
    return apply(attn.o, merged);
}

Tensor Forecaster::feed_forward(const Linear& ff1, const Linear& ff2, const Tensor& x) const {
    return apply(ff2, gelu(apply(ff1, x)));
}

Tensor Forecaster::encode(const Tensor& tokens, bool train, Rng* rng) const {
    const double rate = config_.dropout_rate;
    Tensor x = tokens;
    for (const auto& layer : encoder_) {
        x = apply(layer.norm1, add(x, dropout(apply(layer.self_attn, x, x), rate, train, rng)));
        x = apply(layer.norm2, add(x, dropout(feed_forward(layer.ff1, layer.ff2, x), rate, train, rng)));
    }
    return x;
}

Tensor Forecaster::forward_encoder_decoder(const Tensor& x_past, bool train, Rng* rng) const {
    const std::size_t b = x_past.dim(0);
    const std::size_t d = config_.d_model;
    const double rate = config_.dropout_rate;
    Tensor enc_in = add(apply(input_proj_, x_past), sinusoidal_positions(0, config_.lookback, d));
    Tensor memory = encode(dropout(enc_in, rate, train, rng), train, rng);

    Tensor placeholder = add(sinusoidal_positions(config_.lookback, config_.horizon, d), decoder_token_);
    Tensor y = dropout(add(Tensor::zeros({b, config_.horizon, d}), placeholder), rate, train, rng);
    for (const auto& layer : decoder_) {
        y = apply(layer.norm1, add(y, dropout(apply(layer.self_attn, y, y), rate, train, rng)));
        y = apply(layer.norm2, add(y, dropout(apply(layer.cross_attn, y, memory), rate, train, rng)));
        y = apply(layer.norm3, add(y, dropout(feed_forward(layer.ff1, layer.ff2, y), rate, train, rng)));
    }
    return reshape(apply(head_, y), {b, config_.horizon});
}

Tensor Forecaster::forward_patch(const Tensor& x_past, bool train, Rng* rng) const {
    const std::size_t b = x_past.dim(0);
    const std::size_t d = config_.d_model;
    Tensor patches = patchify(x_past, config_.patch_len, config_.stride);
    const std::size_t count = patches.dim(1);
    Tensor tokens = add(apply(input_proj_, patches), sinusoidal_positions(0, count, d));
    Tensor encoded = encode(dropout(tokens, config_.dropout_rate, train, rng), train, rng);
    return apply(head_, reshape(encoded, {b, count * d}));
}

Tensor Forecaster::forward(const Tensor& x_past, bool train, Rng* dropout_rng) const {
    if (!x_past.defined() || x_past.rank() != 3) {
        throw DimensionError("forward: expected x_past of shape [batch, lookback, features]");
    }
    if (x_past.dim(1) != config_.lookback || x_past.dim(2) != config_.input_width) {
        throw DimensionError("forward: x_past " + shape_string(x_past.shape()) + " does not match lookback " +
                             std::to_string(config_.lookback) + " and input width " +
                             std::to_string(config_.input_width));
    }
    if (config_.arch == Architecture::PatchTST) return forward_patch(x_past, train, dropout_rng);
    return forward_encoder_decoder(x_past, train, dropout_rng);
}

std::vector<Tensor> Forecaster::parameter_tensors() const {
    std::vector<Tensor> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.value);
    return out;
}

std::size_t Forecaster::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
}

Tensor Forecaster::parameter(std::string_view name) const {
    for (const auto& p : params_) {
        if (p.name == name) return p.value;
    }
    throw ContractError("unknown parameter '" + std::string(name) + "'");
}

Forecaster Forecaster::clone() const {
    Forecaster copy(config_, seed_);
    copy.copy_parameters_from(*this);
    return copy;
}

void Forecaster::copy_parameters_from(const Forecaster& other) {
    if (other.params_.size() != params_.size()) {
        throw ConfigError("copy_parameters_from: parameter count differs (" + std::to_string(other.params_.size()) +
                          " vs " + std::to_string(params_.size()) + ")");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& src = other.params_[i];
        auto& dst = params_[i];
        if (src.name != dst.name || src.value.shape() != dst.value.shape()) {
            throw ConfigError("copy_parameters_from: parameter '" + src.name + "' does not match '" + dst.name + "'");
        }
        auto out = dst.value.mutable_data();
        std::copy(src.value.data().begin(), src.value.data().end(), out.begin());
    }
}

// --- checkpoints -------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'T', 'L', 'B', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw FormatError("checkpoint: unexpected end of data");
    return value;
}

} // namespace

void write_checkpoint(std::ostream& out, const Forecaster& model) {
    const auto& c = model.config();
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(c.arch));
    for (std::uint64_t v : {c.d_model, c.n_heads, c.n_encoder_layers, c.n_decoder_layers, c.ff_dim, c.lookback,
                            c.horizon, c.input_width, c.patch_len, c.stride}) {
        put<std::uint64_t>(out, v);
    }
    put<std::uint64_t>(out, c.allow_any_horizon ? 1 : 0);
    put<double>(out, c.dropout_rate);
    put<double>(out, c.probsparse_factor);
    put<std::uint64_t>(out, model.seed());
    put<std::uint64_t>(out, model.parameters().size());
    for (const auto& p : model.parameters()) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
        for (auto dim : p.value.shape()) put<std::uint64_t>(out, dim);
        const auto data = p.value.data();
        out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    }
    if (!out) throw FormatError("checkpoint: write failed");
}

Forecaster read_checkpoint(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw FormatError("checkpoint: bad magic");
    if (get<std::uint32_t>(in) != kVersion) throw FormatError("checkpoint: unsupported version");
    ModelConfig c;
    const auto arch = get<std::uint32_t>(in);
    if (arch < 1 || arch > 3) throw FormatError("checkpoint: unknown architecture id " + std::to_string(arch));
    c.arch = static_cast<Architecture>(arch);
    for (std::size_t* field : {&c.d_model, &c.n_heads, &c.n_encoder_layers, &c.n_decoder_layers, &c.ff_dim,
                               &c.lookback, &c.horizon, &c.input_width, &c.patch_len, &c.stride}) {
        *field = static_cast<std::size_t>(get<std::uint64_t>(in));
    }
    c.allow_any_horizon = get<std::uint64_t>(in) != 0;
    c.dropout_rate = get<double>(in);
    c.probsparse_factor = get<double>(in);
    const auto seed = get<std::uint64_t>(in);
    Forecaster model(c, seed);
    const auto count = get<std::uint64_t>(in);
    if (count != model.parameters().size()) throw FormatError("checkpoint: parameter count mismatch");
    for (const auto& p : model.parameters()) {
        const auto len = get<std::uint32_t>(in);
        std::string name(len, '\0');
        in.read(name.data(), len);
        if (!in || name != p.name) throw FormatError("checkpoint: expected parameter '" + p.name + "'");
        const auto rank = get<std::uint32_t>(in);
        Shape shape(rank);
        for (auto& dim : shape) dim = static_cast<std::size_t>(get<std::uint64_t>(in));
        if (shape != p.value.shape()) throw FormatError("checkpoint: shape mismatch for '" + p.name + "'");
        Tensor t = p.value;
        auto data = t.mutable_data();
        in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (!in) throw FormatError("checkpoint: truncated values for '" + p.name + "'");
    }
    return model;
}

void save_checkpoint(const std::filesystem::path& path, const Forecaster& model) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("checkpoint: cannot open " + path.string() + " for writing");
    write_checkpoint(out, model);
}

Forecaster load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("checkpoint: cannot open " + path.string());
    return read_checkpoint(in);
}

} // namespace tlbench
