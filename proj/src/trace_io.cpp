// SPDX-License-Identifier: Apache-2.0

#include "clva/trace_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace clva {

namespace {

using nlohmann::json;

constexpr std::size_t kHeaderBytes = sizeof(kTraceMagic) + 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8) {
        out.push_back(static_cast<std::uint8_t>(v >> shift));
    }
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

double get_f32(const std::uint8_t* p) {
    return static_cast<double>(std::bit_cast<float>(get_u32(p)));
}

json span_json(const Span& s) { return json::array({s.begin, s.end}); }

Span span_from_json(const json& j, const char* name) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number_unsigned() ||
        !j[1].is_number_unsigned()) {
        throw TraceFormatError(TraceFormatError::Kind::bad_metadata,
                               std::string("metadata: span '") + name +
                                   "' must be [start, end]");
    }
    return {j[0].get<std::size_t>(), j[1].get<std::size_t>()};
}

struct Header {
    std::size_t layers = 0;
    std::size_t heads = 0;
    std::size_t seq_len = 0;
    std::size_t head_dim = 0;
    bool has_values = false;
    TokenLayout layout;
    TraceMeta meta;
};

Header parse_metadata(std::string_view text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw TraceFormatError(TraceFormatError::Kind::bad_metadata,
                               "metadata: not a JSON object");
    }
    auto need = [&](const char* key) -> const json& {
        auto it = doc.find(key);
        if (it == doc.end()) {
            throw TraceFormatError(TraceFormatError::Kind::bad_metadata,
                                   std::string("metadata: missing key '") + key + "'");
        }
        return *it;
    };
    auto need_count = [&](const char* key) {
        const json& v = need(key);
        if (!v.is_number_unsigned()) {
            throw TraceFormatError(TraceFormatError::Kind::bad_metadata,
                                   std::string("metadata: '") + key +
                                       "' must be a non-negative integer");
        }
        return v.get<std::size_t>();
    };

    Header h;
    h.layers = need_count("layers");
    h.heads = need_count("heads");
    h.seq_len = need_count("seq_len");
    h.head_dim = need_count("head_dim");
    const json& hv = need("has_values");
    if (!hv.is_boolean()) {
        throw TraceFormatError(TraceFormatError::Kind::bad_metadata,
                               "metadata: 'has_values' must be a boolean");
    }
    h.has_values = hv.get<bool>();

    const json& spans = need("spans");
    if (!spans.is_object() || !spans.contains("sys") || !spans.contains("vis") ||
        !spans.contains("txt")) {
        throw TraceFormatError(TraceFormatError::Kind::bad_metadata,
                               "metadata: 'spans' must hold sys, vis and txt");
    }
    const Span sys = span_from_json(spans["sys"], "sys");
    const Span vis = span_from_json(spans["vis"], "vis");
    const Span txt = span_from_json(spans["txt"], "txt");
    if (sys.begin != 0 || sys.end != vis.begin || vis.end != txt.begin ||
        txt.end != h.seq_len || sys.end < sys.begin || vis.end < vis.begin ||
        txt.end < txt.begin) {
        throw TraceFormatError(TraceFormatError::Kind::bad_metadata,
                               "metadata: spans do not partition [0, seq_len)");
    }
    try {
        h.layout = build_layout(sys.size(), vis.size(), txt.size());
    } catch (const LayoutError& e) {
        throw TraceFormatError(TraceFormatError::Kind::bad_metadata,
                               std::string("metadata: ") + e.what());
    }

    const json& mid = need("model_id");
    if (!mid.is_string()) {
        throw TraceFormatError(TraceFormatError::Kind::bad_metadata,
                               "metadata: 'model_id' must be a string");
    }
    h.meta.model_id = mid.get<std::string>();
    if (auto it = doc.find("schema_version"); it != doc.end()) {
        if (!it->is_number_integer() || it->get<int>() != TraceMeta::kSchemaVersion) {
            throw TraceFormatError(TraceFormatError::Kind::bad_metadata,
                                   "metadata: unsupported schema_version");
        }
    }
    if (auto it = doc.find("notes"); it != doc.end() && it->is_string()) {
        h.meta.notes = it->get<std::string>();
    }
    if (auto it = doc.find("extra"); it != doc.end() && it->is_object()) {
        for (const auto& [k, v] : it->items()) {
            h.meta.extra[k] = v.is_string() ? v.get<std::string>() : v.dump();
        }
    }
    // Unknown top-level keys written by other producers are kept as strings.
    static const char* const known[] = {"layers",   "heads",    "seq_len", "head_dim",
                                        "has_values", "spans",  "model_id", "schema_version",
                                        "notes",    "extra"};
    for (const auto& [k, v] : doc.items()) {
        if (std::find(std::begin(known), std::end(known), k) == std::end(known)) {
            h.meta.extra[k] = v.is_string() ? v.get<std::string>() : v.dump();
        }
    }
    if (h.layers == 0 || h.heads == 0) {
        throw TraceFormatError(TraceFormatError::Kind::bad_metadata,
                               "metadata: layers and heads must be positive");
    }
    if (h.has_values && h.head_dim == 0) {
        throw TraceFormatError(TraceFormatError::Kind::bad_metadata,
                               "metadata: has_values requires head_dim > 0");
    }
    return h;
}

} // namespace

std::string encode_trace_metadata(const AttentionTrace& trace) {
    const TokenLayout& lay = trace.layout();
    json doc = {
        {"schema_version", trace.meta().schema_version},
        {"layers", trace.layers()},
        {"heads", trace.heads()},
        {"seq_len", trace.seq_len()},
        {"head_dim", trace.head_dim()},
        {"has_values", trace.has_values()},
        {"model_id", trace.meta().model_id},
        {"spans", {{"sys", span_json(lay.sys())},
                   {"vis", span_json(lay.vis())},
                   {"txt", span_json(lay.txt())}}},
    };
    if (!trace.meta().notes.empty()) {
        doc["notes"] = trace.meta().notes;
    }
    if (!trace.meta().extra.empty()) {
        doc["extra"] = trace.meta().extra;
    }
    return doc.dump();
}

std::vector<std::uint8_t> encode_trace(const AttentionTrace& trace) {
    if (auto violations = trace.validate(); !violations.empty()) {
        throw ValidationError("refusing to serialize invalid trace: " +
                              describe_violations(violations));
    }
    const std::string meta = encode_trace_metadata(trace);
    const std::size_t s = trace.seq_len();
    std::size_t floats = trace.layers() * trace.heads() * s * s;
    if (trace.has_values()) {
        floats += trace.layers() * trace.heads() * s * trace.head_dim();
    }

    std::vector<std::uint8_t> out(std::begin(kTraceMagic), std::end(kTraceMagic));
    out.reserve(kHeaderBytes + meta.size() + 4 * floats);
    put_u32(out, static_cast<std::uint32_t>(meta.size()));
    for (char c : meta) {
        out.push_back(static_cast<std::uint8_t>(c));
    }
    for (const Matrix& m : trace.all_attn()) {
        for (double v : m.data()) {
            put_f32(out, v);
        }
    }
    for (const Matrix& m : trace.all_values()) {
        for (double v : m.data()) {
            put_f32(out, v);
        }
    }
    return out;
}

AttentionTrace decode_trace(std::span<const std::uint8_t> bytes) {
    using Kind = TraceFormatError::Kind;
    if (bytes.size() < sizeof(kTraceMagic) ||
        std::memcmp(bytes.data(), kTraceMagic, sizeof(kTraceMagic)) != 0) {
        throw TraceFormatError(Kind::bad_magic, "bad magic: not a CLVA-TRACE v1 file");
    }
    if (bytes.size() < kHeaderBytes) {
        throw TraceFormatError(Kind::truncated, "truncated header: expected " +
                                                    std::to_string(kHeaderBytes) +
                                                    " bytes, got " +
                                                    std::to_string(bytes.size()));
    }
    const std::size_t meta_len = get_u32(bytes.data() + sizeof(kTraceMagic));
    if (bytes.size() < kHeaderBytes + meta_len) {
        throw TraceFormatError(Kind::truncated,
                               "truncated metadata: expected " +
                                   std::to_string(kHeaderBytes + meta_len) +
                                   " bytes, got " + std::to_string(bytes.size()));
    }
    const std::string_view meta_text(reinterpret_cast<const char*>(bytes.data()) + kHeaderBytes,
                                     meta_len);
    Header h = parse_metadata(meta_text);

    const std::size_t s = h.seq_len;
    const std::size_t attn_floats = h.layers * h.heads * s * s;
    const std::size_t value_floats = h.has_values ? h.layers * h.heads * s * h.head_dim : 0;
    const std::size_t expected = kHeaderBytes + meta_len + 4 * (attn_floats + value_floats);
    if (bytes.size() < expected) {
        throw TraceFormatError(Kind::truncated,
                               "truncated payload: expected " + std::to_string(expected) +
                                   " bytes, got " + std::to_string(bytes.size()));
    }
    if (bytes.size() > expected) {
        throw TraceFormatError(Kind::size_mismatch,
                               "metadata/payload size mismatch: metadata implies " +
                                   std::to_string(expected) + " bytes, file has " +
                                   std::to_string(bytes.size()));
    }

    const std::uint8_t* p = bytes.data() + kHeaderBytes + meta_len;
    std::vector<Matrix> attn;
    attn.reserve(h.layers * h.heads);
    for (std::size_t k = 0; k < h.layers * h.heads; ++k) {
        Matrix m(s, s);
        for (double& v : m.data()) {
            v = get_f32(p);
            p += 4;
        }
        attn.push_back(std::move(m));
    }
    std::vector<Matrix> values;
    if (h.has_values) {
        values.reserve(h.layers * h.heads);
        for (std::size_t k = 0; k < h.layers * h.heads; ++k) {
            Matrix m(s, h.head_dim);
            for (double& v : m.data()) {
                v = get_f32(p);
                p += 4;
            }
            values.push_back(std::move(m));
        }
    }

    AttentionTrace trace(h.layers, h.heads, h.head_dim, h.layout, std::move(attn),
                         std::move(values), std::move(h.meta));
    trace.require_valid();
    return trace;
}

std::size_t write_trace(const AttentionTrace& trace, std::ostream& sink) {
    const auto bytes = encode_trace(trace);
    sink.write(reinterpret_cast<const char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size()));
    if (!sink) {
        throw IoError("write_trace: sink write failed");
    }
    return bytes.size();
}

AttentionTrace read_trace(std::istream& source) {
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(source)),
                                    std::istreambuf_iterator<char>());
    if (source.bad()) {
        throw IoError("read_trace: source read failed");
    }
    return decode_trace(bytes);
}

std::size_t write_trace_file(const AttentionTrace& trace, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    return write_trace(trace, out);
}

AttentionTrace read_trace_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    return read_trace(in);
}

} // namespace clva
