#pragma once

// Serialization: JSON sequences and traces, mask CSV/PGM dumps, the model
// parameter file, and JSON configs.

#include "smdm/harness.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace smdm::io {

using json = nlohmann::json;

inline json to_json(const MaskedSequence& x) { return x.tokens; }

inline MaskedSequence sequence_from_json(const json& j) {
    require(j.is_array(), "sequence json: expected an array of token ids");
    MaskedSequence x;
    for (const auto& v : j) {
        require(v.is_number_integer(), "sequence json: token ids must be integers");
        x.tokens.push_back(v.get<TokenId>());
    }
    return x;
}

inline json to_json(const SparseSequence& sp) {
    json clean = json::array();
    for (const auto& [p, t] : sp.clean) {
        clean.push_back({p, t});
    }
    return {{"clean", clean}, {"len", sp.total_len}, {"regs", sp.reg_count}};
}

inline SparseSequence sparse_from_json(const json& j) {
    require(j.is_object() && j.contains("clean") && j.contains("len"), "sparse json: needs clean and len");
    SparseSequence sp;
    for (const auto& e : j.at("clean")) {
        require(e.is_array() && e.size() == 2, "sparse json: clean entries are [pos, id] pairs");
        sp.clean.emplace_back(e[0].get<Position>(), e[1].get<TokenId>());
    }
    sp.total_len = j.at("len").get<int>();
    sp.reg_count = j.value("regs", 0);
    return sp;
}

inline json to_json(const SampleResult& r) {
    json steps = json::array();
    for (const auto& s : r.trace) {
        steps.push_back({{"step", s.step},
                         {"new_cache", s.new_cache},
                         {"fed_masks", s.fed_masks},
                         {"decoded", s.decoded},
                         {"tokens", s.decoded_tokens},
                         {"input_tokens", s.input_tokens}});
    }
    return {{"response", r.response.tokens}, {"token_forwards", r.token_forwards}, {"steps", steps}};
}

// Header row: corner cell then key labels; each row: query label then 0/1.
inline std::string mask_to_csv(const AttentionMask& m) {
    std::ostringstream os;
    os << "query\\key";
    for (const auto& l : m.col_labels()) {
        os << ',' << l.str();
    }
    os << '\n';
    for (std::size_t q = 0; q < m.rows(); ++q) {
        os << m.row_labels()[q].str();
        for (std::size_t k = 0; k < m.cols(); ++k) {
            os << ',' << (m.allowed(q, k) ? 1 : 0);
        }
        os << '\n';
    }
    return os.str();
}

// Binary graymap, white = allowed, each cell scale x scale pixels.
inline std::string mask_to_pgm(const AttentionMask& m, int scale = 8) {
    require(scale >= 1, "mask_to_pgm: scale must be >= 1");
    const auto s = static_cast<std::size_t>(scale);
    std::ostringstream os;
    os << "P5\n" << m.cols() * s << ' ' << m.rows() * s << "\n255\n";
    for (std::size_t q = 0; q < m.rows() * s; ++q) {
        for (std::size_t k = 0; k < m.cols() * s; ++k) {
            os.put(m.allowed(q / s, k / s) ? static_cast<char>(255) : static_cast<char>(0));
        }
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Configs

inline json to_json(const ModelConfig& c) {
    return {{"n_layers", c.n_layers},   {"n_heads", c.n_heads},     {"d_model", c.d_model},
            {"d_ff", c.d_ff},           {"vocab_size", c.vocab.size}, {"mask_id", c.vocab.mask_id},
            {"reg_id", c.vocab.reg_id}, {"rope_base", c.rope_base}, {"max_position", c.max_position},
            {"seed", c.seed}};
}

// Keys present in j override `base`.
inline ModelConfig model_config_from_json(const json& j, ModelConfig base = {}) {
    require(j.is_object(), "model config json: expected an object");
    base.n_layers = j.value("n_layers", base.n_layers);
    base.n_heads = j.value("n_heads", base.n_heads);
    base.d_model = j.value("d_model", base.d_model);
    base.d_ff = j.value("d_ff", base.d_ff);
    if (j.contains("vocab_size")) {
        base.vocab = Vocabulary::with_specials(j.at("vocab_size").get<int>());
    }
    base.vocab.mask_id = j.value("mask_id", base.vocab.mask_id);
    base.vocab.reg_id = j.value("reg_id", base.vocab.reg_id);
    base.rope_base = j.value("rope_base", base.rope_base);
    base.max_position = j.value("max_position", base.max_position);
    base.seed = j.value("seed", base.seed);
    base.validate();
    return base;
}

inline TrainConfig train_config_from_json(const json& j, TrainConfig c = {}) {
    require(j.is_object(), "train config json: expected an object");
    static const std::vector<std::string> known = {
        "M_min", "M_max", "N_min", "N_max", "reg_count", "batch_size", "steps", "lr", "warmup_steps", "min_lr_ratio",
        "optimizer", "beta1", "beta2", "adam_eps", "t_eps", "reduction", "seed", "grid_h", "grid_w", "model",
        "eval_items", "val_prompts", "sample_steps"};
    for (const auto& [key, _] : j.items()) {
        require(std::find(known.begin(), known.end(), key) != known.end(), "train config json: unknown key " + key);
    }
    c.M_min = j.value("M_min", c.M_min);
    c.M_max = j.value("M_max", c.M_max);
    c.N_min = j.value("N_min", c.N_min);
    c.N_max = j.value("N_max", c.N_max);
    c.reg_count = j.value("reg_count", c.reg_count);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
    c.lr = j.value("lr", c.lr);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.min_lr_ratio = j.value("min_lr_ratio", c.min_lr_ratio);
    if (j.contains("optimizer")) {
        const auto o = j.at("optimizer").get<std::string>();
        require(o == "adam" || o == "sgd", "train config json: optimizer must be adam or sgd");
        c.optimizer = o == "adam" ? TrainConfig::Optimizer::adam : TrainConfig::Optimizer::sgd;
    }
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.t_eps = j.value("t_eps", c.t_eps);
    if (j.contains("reduction")) {
        const auto r = j.at("reduction").get<std::string>();
        require(r == "masked_mean" || r == "sequence_sum", "train config json: reduction must be masked_mean or sequence_sum");
        c.reduction = r == "masked_mean" ? LossReduction::masked_mean : LossReduction::sequence_sum;
    }
    c.seed = j.value("seed", c.seed);
    c.grid_h = j.value("grid_h", c.grid_h);
    c.grid_w = j.value("grid_w", c.grid_w);
    if (j.contains("model")) {
        c.model = model_config_from_json(j.at("model"), c.model);
    }
    c.eval_items = j.value("eval_items", c.eval_items);
    c.val_prompts = j.value("val_prompts", c.val_prompts);
    c.sample_steps = j.value("sample_steps", c.sample_steps);
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Model file: 8-byte magic, u64 header length, JSON header (config and
// tensor shapes in storage order), then little-endian float32 values.

inline constexpr char kModelMagic[8] = {'S', 'M', 'D', 'M', 'P', 'A', 'R', '1'};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

inline std::uint64_t get_u64(const std::string& in, std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)])) << (8 * i);
    }
    return v;
}

inline std::uint32_t get_u32(const std::string& in, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)])) << (8 * i);
    }
    return v;
}

}  // namespace detail

template <typename T>
std::string serialize_model(const Model<T>& model) {
    json shapes = json::array();
    std::string data;
    model.params().for_each([&](const std::string& name, const Matrix<T>& m) {
        shapes.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            detail::put_u32(data, std::bit_cast<std::uint32_t>(static_cast<float>(m.data()[i])));
        }
    });
    const std::string header = json{{"config", to_json(model.config())}, {"tensors", shapes}}.dump();
    std::string out(kModelMagic, sizeof(kModelMagic));
    const auto n = static_cast<std::uint64_t>(header.size());
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((n >> (8 * i)) & 0xff));
    }
    return out + header + data;
}

template <typename T = float>
Model<T> deserialize_model(const std::string& bytes) {
    require(bytes.size() >= 16 && std::equal(kModelMagic, kModelMagic + 8, bytes.begin()), "model file: bad magic");
    const auto hlen = detail::get_u64(bytes, 8);
    require(16 + hlen <= bytes.size(), "model file: truncated header");
    const auto header = json::parse(bytes.substr(16, hlen));
    const auto cfg = model_config_from_json(header.at("config"));
    Model<T> model(cfg);
    Params<T> params = model.params();
    const auto& shapes = header.at("tensors");
    std::size_t at = 16 + hlen;
    std::size_t idx = 0;
    params.for_each([&](const std::string& name, Matrix<T>& m) {
        require(idx < shapes.size(), "model file: fewer tensors than the config needs");
        const auto& s = shapes[idx++];
        require(s.at("name").get<std::string>() == name && s.at("rows").get<Eigen::Index>() == m.rows() &&
                    s.at("cols").get<Eigen::Index>() == m.cols(),
                "model file: tensor " + name + " does not match the config");
        require(at + 4 * static_cast<std::size_t>(m.size()) <= bytes.size(), "model file: truncated data");
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m.data()[i] = static_cast<T>(std::bit_cast<float>(detail::get_u32(bytes, at)));
            at += 4;
        }
    });
    require(idx == shapes.size() && at == bytes.size(), "model file: trailing data");
    return Model<T>(cfg, std::move(params));
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), "cannot write " + path);
    out << content;
    require(static_cast<bool>(out), "write failed: " + path);
}

template <typename T>
void save_model(const std::string& path, const Model<T>& model) {
    write_file(path, serialize_model(model));
}

template <typename T = float>
Model<T> load_model(const std::string& path) {
    return deserialize_model<T>(read_file(path));
}

}  // namespace smdm::io
