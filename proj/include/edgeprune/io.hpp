#pragma once

// File formats and small IO helpers shared across the toolkit:
//   circuit JSON   {model_config_hash, kept_nodes, kept_edges, sparsity}
//   dataset JSONL  one example pair per line
//   vocab JSON     token list
//   manifest JSON  per-run config, seed, git state, input hashes

#include <cstdint>
#include <string>
#include <vector>

#include "edgeprune/graph.hpp"

namespace edgeprune {

uint64_t fnv64(const void* data, size_t n);
uint64_t fnv64(const std::string& s);
std::string hex64(uint64_t v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
uint64_t hash_file(const std::string& path);

void save_circuit(const Circuit& c, const ComputationalGraph& g, const std::string& path);
Circuit load_circuit(const ComputationalGraph& g, const std::string& path);

// DOT graph of the kept edges; nodes named embed / a{l}.h{h} / m{l} / logits,
// attention-input edges labelled q/k/v.
std::string circuit_to_dot(const Circuit& c, const ComputationalGraph& g);

struct ManifestInput {
    std::string path;
    std::string hash;
};

struct Manifest {
    std::string command;
    std::vector<std::string> args;
    uint64_t seed = 0;
    std::string git_describe;
    std::vector<ManifestInput> inputs;
};

void write_manifest(const Manifest& m, const std::string& path);
std::string git_describe_string();

// Creates the run directory; refuses to reuse an existing one so output
// files are never appended to.
void create_run_dir(const std::string& path);

}  // namespace edgeprune
