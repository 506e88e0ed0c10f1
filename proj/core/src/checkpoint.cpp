#include "cpnav/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cpnav/error.hpp"

namespace cpnav {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void put_floats(std::vector<std::uint8_t>& out, std::span<const float> values) {
    for (float f : values) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

LayerKind parse_kind(const std::string& name) {
    for (LayerKind k : {LayerKind::Conv2d, LayerKind::Relu, LayerKind::MaxPool2d, LayerKind::Flatten, LayerKind::Dense,
                        LayerKind::Softmax})
        if (layer_kind_name(k) == name) return k;
    throw FormatError("unknown layer kind '" + name + "'");
}

struct ParsedArchitecture {
    Shape input;
    std::vector<std::string> classes;
    std::vector<LayerSpec> layers;
};

int parse_int(const std::string& v) {
    std::size_t used = 0;
    int r = 0;
    try {
        r = std::stoi(v, &used);
    } catch (const std::exception&) {
        throw FormatError("bad integer '" + v + "' in architecture text");
    }
    if (used != v.size()) throw FormatError("bad integer '" + v + "' in architecture text");
    return r;
}

ParsedArchitecture parse_architecture(const std::string& text) {
    ParsedArchitecture a;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string head;
        ls >> head;
        if (head == "input") {
            int v;
            while (ls >> v) a.input.push_back(v);
        } else if (head == "classes") {
            std::string c;
            while (ls >> c) a.classes.push_back(c);
        } else if (head == "layer") {
            std::string kind;
            ls >> kind;
            LayerSpec s = simple_spec(parse_kind(kind));
            std::string kv;
            while (ls >> kv) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) throw FormatError("malformed layer attribute '" + kv + "'");
                const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
                if (key == "in") (s.kind == LayerKind::Conv2d ? s.in_channels : s.in_dim) = parse_int(val);
                else if (key == "out") (s.kind == LayerKind::Conv2d ? s.out_channels : s.out_dim) = parse_int(val);
                else if (key == "k") s.kernel_h = s.kernel_w = parse_int(val);
                else if (key == "stride") s.stride = parse_int(val);
                else if (key == "pad") s.pad = parse_int(val);
                else if (key == "lr_mult") {
                    try {
                        s.lr_mult = std::stod(val);
                    } catch (const std::exception&) {
                        throw FormatError("bad lr_mult '" + val + "'");
                    }
                } else throw FormatError("unknown layer attribute '" + key + "'");
            }
            a.layers.push_back(s);
        } else if (!head.empty()) {
            throw FormatError("unexpected architecture line '" + line + "'");
        }
    }
    if (a.input.empty() || a.layers.empty()) throw FormatError("architecture text lacks input or layers");
    return a;
}

std::size_t params_len(const LayerSpec& s) {
    if (s.kind == LayerKind::Conv2d)
        return static_cast<std::size_t>(s.out_channels) * s.in_channels * s.kernel_h * s.kernel_w + s.out_channels;
    if (s.kind == LayerKind::Dense) return static_cast<std::size_t>(s.out_dim) * s.in_dim + s.out_dim;
    return 0;
}

}  // namespace

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t len) {
    uLong crc = crc32(0L, Z_NULL, 0);
    while (len > 0) {
        const uInt chunk = static_cast<uInt>(std::min<std::size_t>(len, 1u << 30));
        crc = crc32(crc, data, chunk);
        data += chunk;
        len -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::string architecture_text(const Network& network) {
    std::ostringstream os;
    os << "input";
    for (int d : network.input_shape()) os << ' ' << d;
    os << "\nclasses";
    for (const auto& c : network.class_names()) os << ' ' << c;
    os << '\n';
    for (const LayerSpec& s : network.layers()) {
        os << "layer " << layer_kind_name(s.kind);
        switch (s.kind) {
            case LayerKind::Conv2d:
                os << " in=" << s.in_channels << " out=" << s.out_channels << " k=" << s.kernel_h << " stride=" << s.stride
                   << " pad=" << s.pad;
                break;
            case LayerKind::MaxPool2d: os << " k=" << s.kernel_h << " stride=" << s.stride; break;
            case LayerKind::Dense: os << " in=" << s.in_dim << " out=" << s.out_dim; break;
            default: break;
        }
        os << " lr_mult=" << format_double(s.lr_mult) << '\n';
    }
    return os.str();
}

std::vector<std::uint8_t> serialize_checkpoint(const Network& network) {
    const std::string text = architecture_text(network);
    std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    for (const LayerParams& p : network.all_params()) {
        put_floats(out, p.weights.data());
        put_floats(out, p.bias.data());
    }
    put_u32(out, crc32_of(out.data(), out.size()));
    return out;
}

Network deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    constexpr std::size_t kMagic = sizeof kCheckpointMagic;
    if (bytes.size() < kMagic + 8) throw FormatError("checkpoint truncated");
    if (std::memcmp(bytes.data(), kCheckpointMagic, kMagic) != 0) throw FormatError("checkpoint magic mismatch");
    const std::uint32_t stored_crc = get_u32(bytes.data() + bytes.size() - 4);
    if (crc32_of(bytes.data(), bytes.size() - 4) != stored_crc) throw FormatError("checkpoint CRC mismatch");
    const std::uint32_t text_len = get_u32(bytes.data() + kMagic);
    if (kMagic + 4 + static_cast<std::size_t>(text_len) + 4 > bytes.size()) throw FormatError("checkpoint truncated");
    const std::string text(reinterpret_cast<const char*>(bytes.data() + kMagic + 4), text_len);
    ParsedArchitecture arch = parse_architecture(text);

    std::size_t total = 0;
    for (const LayerSpec& s : arch.layers) total += params_len(s);
    const std::size_t offset = kMagic + 4 + text_len;
    if (offset + 4 * total + 4 != bytes.size())
        throw FormatError("checkpoint length " + std::to_string(bytes.size()) + " does not match architecture");

    const std::uint8_t* p = bytes.data() + offset;
    auto read_tensor = [&p](Shape shape) {
        Tensor t(std::move(shape));
        for (float& f : t.data()) {
            f = std::bit_cast<float>(get_u32(p));
            p += 4;
        }
        return t;
    };
    std::vector<LayerParams> params;
    for (const LayerSpec& s : arch.layers) {
        LayerParams lp;
        if (s.kind == LayerKind::Conv2d) {
            lp.weights = read_tensor({s.out_channels, s.in_channels, s.kernel_h, s.kernel_w});
            lp.bias = read_tensor({s.out_channels});
        } else if (s.kind == LayerKind::Dense) {
            lp.weights = read_tensor({s.out_dim, s.in_dim});
            lp.bias = read_tensor({s.out_dim});
        }
        params.push_back(std::move(lp));
    }
    try {
        return Network(std::move(arch.input), std::move(arch.classes), std::move(arch.layers), std::move(params));
    } catch (const std::exception& e) {
        throw FormatError(std::string("checkpoint describes an invalid network: ") + e.what());
    }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void save_checkpoint(const Network& network, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_checkpoint(network));
}

Network load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file_bytes(path)); }

}  // namespace cpnav
