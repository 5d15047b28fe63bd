#include "edgeprune/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace edgeprune {

using nlohmann::json;
namespace fs = std::filesystem;

uint64_t fnv64(const void* data, size_t n) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t fnv64(const std::string& s) { return fnv64(s.data(), s.size()); }

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path);
}

uint64_t hash_file(const std::string& path) { return fnv64(read_text_file(path)); }

void save_circuit(const Circuit& c, const ComputationalGraph& g, const std::string& path) {
    json j;
    j["model_config_hash"] = c.model_hash;
    json nodes = json::array();
    for (int w = 0; w < g.writers; ++w)
        if (c.kept_nodes[w]) nodes.push_back(writer_name(writer_from_index(g.cfg, w)));
    j["kept_nodes"] = std::move(nodes);
    json edges = json::array();
    for (int i = 0; i < g.n_edges(); ++i)
        if (c.kept_edges[i])
            edges.push_back({writer_name(g.edges[i].src), reader_name(g.edges[i].dst)});
    j["kept_edges"] = std::move(edges);
    j["sparsity"] = c.sparsity();
    write_text_file(path, j.dump(2));
}

Circuit load_circuit(const ComputationalGraph& g, const std::string& path) {
    json j = json::parse(read_text_file(path));
    Circuit c = empty_circuit(g, j.at("model_config_hash").get<std::string>());
    for (const auto& n : j.at("kept_nodes")) {
        auto w = writer_from_name(n.get<std::string>());
        if (!w) throw std::runtime_error("load_circuit: unknown node " + n.get<std::string>());
        int wi = writer_index(g.cfg, *w);
        if (wi < 0 || wi >= g.writers)
            throw std::runtime_error("load_circuit: node out of range " + n.get<std::string>());
        c.kept_nodes[wi] = 1;
    }
    for (const auto& e : j.at("kept_edges")) {
        auto w = writer_from_name(e.at(0).get<std::string>());
        auto r = reader_from_name(e.at(1).get<std::string>());
        if (!w || !r)
            throw std::runtime_error("load_circuit: bad edge " + e.dump());
        int ei = g.edge_index(writer_index(g.cfg, *w), reader_index(g.cfg, *r));
        if (ei < 0) throw std::runtime_error("load_circuit: edge not in graph " + e.dump());
        c.kept_edges[ei] = 1;
    }
    return c;
}

std::string circuit_to_dot(const Circuit& c, const ComputationalGraph& g) {
    std::ostringstream os;
    os << "digraph circuit {\n  rankdir=TB;\n";
    for (int w = 0; w < g.writers; ++w) {
        os << "  \"" << writer_name(writer_from_index(g.cfg, w)) << "\"";
        if (!c.kept_nodes[w]) os << " [style=dashed,color=gray]";
        os << ";\n";
    }
    os << "  \"logits\";\n";
    for (int i = 0; i < g.n_edges(); ++i) {
        if (!c.kept_edges[i]) continue;
        const Edge& e = g.edges[i];
        std::string dst;
        std::string label;
        switch (e.dst.kind) {
            case ReaderKind::HeadQ:
                dst = writer_name({WriterKind::HeadOut, e.dst.layer, e.dst.head});
                label = "q";
                break;
            case ReaderKind::HeadK:
                dst = writer_name({WriterKind::HeadOut, e.dst.layer, e.dst.head});
                label = "k";
                break;
            case ReaderKind::HeadV:
                dst = writer_name({WriterKind::HeadOut, e.dst.layer, e.dst.head});
                label = "v";
                break;
            case ReaderKind::MlpIn:
                dst = writer_name({WriterKind::MlpOut, e.dst.layer, 0});
                break;
            case ReaderKind::Logits:
                dst = "logits";
                break;
        }
        os << "  \"" << writer_name(e.src) << "\" -> \"" << dst << "\"";
        if (!label.empty()) os << " [label=" << label << "]";
        os << ";\n";
    }
    os << "}\n";
    return os.str();
}

void write_manifest(const Manifest& m, const std::string& path) {
    json j;
    j["command"] = m.command;
    j["args"] = m.args;
    j["seed"] = m.seed;
    j["git_describe"] = m.git_describe;
    json inputs = json::object();
    for (const ManifestInput& in : m.inputs) inputs[in.path] = in.hash;
    j["inputs"] = std::move(inputs);
    write_text_file(path, j.dump(2));
}

std::string git_describe_string() {
    FILE* pipe = popen("git describe --always --dirty 2>/dev/null", "r");
    if (!pipe) return "unknown";
    char buf[256];
    std::string out;
    while (fgets(buf, sizeof(buf), pipe)) out += buf;
    pclose(pipe);
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    return out.empty() ? "unknown" : out;
}

void create_run_dir(const std::string& path) {
    fs::path p(path);
    if (fs::exists(p))
        throw std::runtime_error("run directory already exists (runs never overwrite): " + path);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw std::runtime_error("cannot create run directory " + path + ": " + ec.message());
}

}  // namespace edgeprune
