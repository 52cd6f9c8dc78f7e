#include "ldmshield/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "ldmshield/finetune.hpp"
#include "ldmshield/hashio.hpp"

namespace ldms {

namespace {
constexpr std::uint32_t kArrayVersion = 1;
constexpr std::uint32_t kStoreVersion = 1;
constexpr std::uint8_t kDtypeF64 = 1;

void put_u8(std::string& buf, std::uint8_t v) { buf.push_back(static_cast<char>(v)); }
void put_u16(std::string& buf, std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_i32(std::string& buf, std::int32_t v) { put_u32(buf, static_cast<std::uint32_t>(v)); }
void put_f64(std::string& buf, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw std::runtime_error("container: truncated file");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

void put_tensor(std::string& buf, const Tensor& t) {
    put_u8(buf, kDtypeF64);
    put_u8(buf, static_cast<std::uint8_t>(t.rank()));
    for (int d : t.shape()) put_i32(buf, d);
    for (std::size_t i = 0; i < t.size(); ++i) put_f64(buf, t[i]);
}

Tensor read_tensor(Reader& r) {
    std::uint8_t dtype = r.u8();
    if (dtype != kDtypeF64) throw std::runtime_error("container: unknown dtype tag");
    int rank = r.u8();
    std::vector<int> shape(rank);
    for (int i = 0; i < rank; ++i) shape[i] = static_cast<int>(r.u32());
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = r.f64();
    return t;
}

void write_with_crc(std::string body, const std::string& path) {
    std::uint32_t crc = crc32_bytes(body.data(), body.size());
    put_u32(body, crc);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot create file: " + path);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw std::runtime_error("short write: " + path);
}

std::string read_with_crc(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (body.size() < 4) throw std::runtime_error("container: truncated file");
    std::string payload = body.substr(0, body.size() - 4);
    Reader tail{body, body.size() - 4};
    std::uint32_t stored = tail.u32();
    if (crc32_bytes(payload.data(), payload.size()) != stored)
        throw std::runtime_error("container: checksum mismatch in " + path);
    return payload;
}
}  // namespace

void export_array(const Tensor& t, const nlohmann::json& meta, const std::string& path) {
    std::string buf = "LDSA";
    put_u32(buf, kArrayVersion);
    std::string mjson = meta.dump();
    put_u32(buf, static_cast<std::uint32_t>(mjson.size()));
    buf += mjson;
    put_tensor(buf, t);
    write_with_crc(std::move(buf), path);
}

std::pair<Tensor, nlohmann::json> import_array(const std::string& path) {
    std::string body = read_with_crc(path);
    Reader r{body};
    if (r.bytes(4) != "LDSA") throw std::runtime_error("container: bad magic in " + path);
    std::uint32_t version = r.u32();
    if (version != kArrayVersion) throw std::runtime_error("container: unknown version");
    std::uint32_t mlen = r.u32();
    nlohmann::json meta = nlohmann::json::parse(r.bytes(mlen));
    Tensor t = read_tensor(r);
    return {std::move(t), std::move(meta)};
}

void export_bias_field(const BiasField& field, const std::string& path) {
    nlohmann::json meta;
    meta["timestep"] = field.timestep;
    meta["mc_samples"] = field.mc_samples;
    meta["kind"] = bias_kind_name(field.kind);
    meta["sources"] = field.sources;
    export_array(field.data, meta, path);
}

BiasField import_bias_field(const std::string& path) {
    auto [data, meta] = import_array(path);
    BiasField f;
    f.data = std::move(data);
    f.timestep = meta.value("timestep", -1);
    f.mc_samples = meta.value("mc_samples", 0);
    std::string kind = meta.value("kind", "eps_adv");
    if (kind == "eps_adv") f.kind = BiasKind::eps_adv;
    else if (kind == "reverse_bias") f.kind = BiasKind::reverse_bias;
    else if (kind == "sampling_bias") f.kind = BiasKind::sampling_bias;
    else if (kind == "sampling_error") f.kind = BiasKind::sampling_error;
    else throw std::runtime_error("bias field: unknown kind " + kind);
    if (meta.contains("sources"))
        f.sources = meta["sources"].get<std::map<std::string, std::string>>();
    return f;
}

void save_store(const ad::ParamStore& store, const nlohmann::json& meta, const std::string& path) {
    std::string buf = "LDSC";
    put_u32(buf, kStoreVersion);
    std::string mjson = meta.dump();
    put_u32(buf, static_cast<std::uint32_t>(mjson.size()));
    buf += mjson;
    std::vector<std::string> names = store.names();
    put_u32(buf, static_cast<std::uint32_t>(names.size()));
    for (const std::string& n : names) {
        put_u16(buf, static_cast<std::uint16_t>(n.size()));
        buf += n;
        put_tensor(buf, store.value(n));
    }
    write_with_crc(std::move(buf), path);
}

std::pair<nlohmann::json, std::map<std::string, Tensor>> load_store(const std::string& path) {
    std::string body = read_with_crc(path);
    Reader r{body};
    if (r.bytes(4) != "LDSC") throw std::runtime_error("checkpoint: bad magic in " + path);
    std::uint32_t version = r.u32();
    if (version != kStoreVersion) throw std::runtime_error("checkpoint: unknown version");
    std::uint32_t mlen = r.u32();
    nlohmann::json meta = nlohmann::json::parse(r.bytes(mlen));
    std::uint32_t count = r.u32();
    std::map<std::string, Tensor> values;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint16_t nlen = r.u16();
        std::string name = r.bytes(nlen);
        values.emplace(std::move(name), read_tensor(r));
    }
    return {std::move(meta), std::move(values)};
}

namespace {
nlohmann::json unet_config_json(const UNetConfig& c) {
    return {{"latent_h", c.latent_h}, {"latent_w", c.latent_w}, {"latent_c", c.latent_c},
            {"base", c.base},         {"cond_vocab", c.cond_vocab}, {"time_dim", c.time_dim},
            {"sin_dim", c.sin_dim},   {"groups", c.groups}};
}

UNetConfig unet_config_from_json(const nlohmann::json& j) {
    UNetConfig c;
    c.latent_h = j.at("latent_h");
    c.latent_w = j.at("latent_w");
    c.latent_c = j.at("latent_c");
    c.base = j.at("base");
    c.cond_vocab = j.at("cond_vocab");
    c.time_dim = j.at("time_dim");
    c.sin_dim = j.at("sin_dim");
    c.groups = j.at("groups");
    return c;
}
}  // namespace

void save_unet(const UNetModel& model, const std::string& path, const nlohmann::json& extra_meta) {
    nlohmann::json meta = extra_meta;
    meta["model"] = "unet";
    meta["config"] = unet_config_json(model.config());
    save_store(model.params(), meta, path);
}

std::unique_ptr<UNetModel> load_unet(const std::string& path, nlohmann::json* meta_out) {
    auto [meta, values] = load_store(path);
    if (meta.value("model", "") != "unet")
        throw std::runtime_error("checkpoint: not a unet model: " + path);
    UNetConfig cfg = unet_config_from_json(meta.at("config"));
    auto model = std::make_unique<UNetModel>(cfg, /*init_seed=*/0);
    ad::ParamStore& store = model->params();
    bool has_lora = false;
    for (auto& [name, tensor] : values) {
        if (store.has(name)) {
            if (!store.value(name).same_shape(tensor))
                throw std::runtime_error("checkpoint: shape mismatch for " + name);
            store.value(name) = tensor;
        } else {
            store.create(name, tensor);  // adapters or other extras
            if (name.find(".lora_") != std::string::npos) has_lora = true;
        }
    }
    if (has_lora) {
        // adapter checkpoints keep the base weights frozen, factors trainable
        store.freeze_all();
        for (const std::string& n : store.names())
            if (n.find(".lora_a") != std::string::npos || n.find(".lora_b") != std::string::npos)
                store.unfreeze(n);
    }
    if (meta_out) *meta_out = meta;
    return model;
}

void save_conv_autoencoder(ConvAutoencoder& ae, const std::string& path,
                           const nlohmann::json& extra_meta) {
    nlohmann::json meta = extra_meta;
    meta["model"] = "conv_autoencoder";
    meta["config"] = {{"image_c", ae.config().image_c},
                      {"base", ae.config().base},
                      {"latent_c", ae.config().latent_c}};
    meta["latent_scale"] = ae.latent_scale();
    save_store(*ae.params(), meta, path);
}

std::unique_ptr<ConvAutoencoder> load_conv_autoencoder(const std::string& path,
                                                       nlohmann::json* meta_out) {
    auto [meta, values] = load_store(path);
    if (meta.value("model", "") != "conv_autoencoder")
        throw std::runtime_error("checkpoint: not a conv autoencoder: " + path);
    ConvAutoencoderConfig cfg;
    cfg.image_c = meta.at("config").at("image_c");
    cfg.base = meta.at("config").at("base");
    cfg.latent_c = meta.at("config").at("latent_c");
    auto ae = std::make_unique<ConvAutoencoder>(cfg, /*init_seed=*/0);
    ad::ParamStore& store = *ae->params();
    for (auto& [name, tensor] : values) {
        if (!store.has(name)) throw std::runtime_error("checkpoint: unexpected param " + name);
        store.value(name) = tensor;
    }
    ae->set_latent_scale(meta.value("latent_scale", 1.0));
    if (meta_out) *meta_out = meta;
    return ae;
}

void save_adapters(const UNetModel& model, const std::string& path) {
    const ad::ParamStore& store = model.params();
    ad::ParamStore adapters;
    for (const std::string& n : store.names())
        if (n.find(".lora_") != std::string::npos) adapters.create(n, store.value(n));
    nlohmann::json meta;
    meta["model"] = "unet_adapters";
    meta["config"] = unet_config_json(model.config());
    save_store(adapters, meta, path);
}

void load_adapters_into(UNetModel& model, const std::string& path, bool merge) {
    auto [meta, values] = load_store(path);
    if (meta.value("model", "") != "unet_adapters")
        throw std::runtime_error("checkpoint: not an adapter file: " + path);
    ad::ParamStore& store = model.params();
    store.freeze_all();
    for (auto& [name, tensor] : values) {
        if (store.has(name))
            store.value(name) = tensor;
        else
            store.create(name, tensor);
        if (name.find(".lora_scale") != std::string::npos) store.freeze(name);
    }
    if (merge) merge_adapters(model);
}

std::string store_hash(const ad::ParamStore& store) {
    std::string acc;
    for (const std::string& n : store.names()) {
        acc += n;
        acc += ':';
        acc += sha256_tensor(store.value(n));
        acc += '\n';
    }
    return sha256_hex(acc);
}

}  // namespace ldms
