#include "medseg/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "medseg/errors.hpp"
#include "medseg/rng.hpp"

namespace medseg {

namespace {

constexpr char kMagic[8] = {'M', 'S', 'C', 'K', 'P', 'T', '0', '1'};

void append_u64(std::vector<unsigned char>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

uint64_t read_u64(const unsigned char* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

void append_f64(std::vector<unsigned char>& out, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    append_u64(out, bits);
}

double read_f64(const unsigned char* p) {
    const uint64_t bits = read_u64(p);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

}  // namespace

std::vector<unsigned char> serialize_weights(const NetworkWeights& w) {
    nlohmann::json manifest;
    manifest["params"] = nlohmann::json::array();
    for (const auto& name : w.order) {
        nlohmann::json p;
        p["name"] = name;
        p["shape"] = w.params.at(name).shape();
        manifest["params"].push_back(std::move(p));
    }
    manifest["meta"] = w.meta;
    const std::string mtext = manifest.dump();

    std::vector<unsigned char> out;
    out.insert(out.end(), kMagic, kMagic + 8);
    append_u64(out, mtext.size());
    out.insert(out.end(), mtext.begin(), mtext.end());
    for (const auto& name : w.order) {
        const Tensor& t = w.params.at(name);
        for (long i = 0; i < t.numel(); ++i) append_f64(out, t[i]);
    }
    // digest over everything after the magic
    append_u64(out, fnv1a64_bytes(out.data() + 8, out.size() - 8));
    return out;
}

NetworkWeights deserialize_weights(const std::vector<unsigned char>& bytes,
                                   const std::string& context) {
    if (bytes.size() < 24 || std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw ImportError(context + ": not a checkpoint file");
    const uint64_t stored_digest = read_u64(bytes.data() + bytes.size() - 8);
    const uint64_t computed = fnv1a64_bytes(bytes.data() + 8, bytes.size() - 16);
    if (stored_digest != computed)
        throw CorruptionError(context + ": digest mismatch (corrupted checkpoint)");

    const uint64_t mlen = read_u64(bytes.data() + 8);
    if (16 + mlen + 8 > bytes.size()) throw ImportError(context + ": truncated manifest");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.begin() + 16,
                                         bytes.begin() + 16 + static_cast<long>(mlen));
    } catch (const nlohmann::json::exception& e) {
        throw ImportError(context + ": bad manifest: " + e.what());
    }

    NetworkWeights w;
    size_t off = 16 + mlen;
    for (const auto& p : manifest.at("params")) {
        const std::string name = p.at("name").get<std::string>();
        const std::vector<long> shape = p.at("shape").get<std::vector<long>>();
        Tensor t(shape);
        if (off + static_cast<size_t>(t.numel()) * 8 + 8 > bytes.size())
            throw ImportError(context + ": truncated payload at " + name);
        for (long i = 0; i < t.numel(); ++i) {
            t[i] = read_f64(bytes.data() + off);
            off += 8;
        }
        w.add(name, std::move(t));
    }
    if (off + 8 != bytes.size()) throw ImportError(context + ": trailing bytes in checkpoint");
    for (auto it = manifest.at("meta").begin(); it != manifest.at("meta").end(); ++it)
        w.meta[it.key()] = it.value().get<std::string>();
    return w;
}

void save_checkpoint(const NetworkWeights& w, const std::filesystem::path& path) {
    const std::vector<unsigned char> bytes = serialize_weights(w);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    // write to a sibling then rename so readers never see a partial file
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw FormatError("cannot write checkpoint: " + path.string());
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
    }
    std::filesystem::rename(tmp, path);
}

NetworkWeights load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImportError("cannot open checkpoint: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return deserialize_weights(bytes, path.string());
}

uint64_t checkpoint_digest(const NetworkWeights& w) {
    const std::vector<unsigned char> bytes = serialize_weights(w);
    return fnv1a64_bytes(bytes.data() + 8, bytes.size() - 16);
}

}  // namespace medseg
