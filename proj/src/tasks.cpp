#include "edgeprune/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "edgeprune/io.hpp"

namespace edgeprune {

using nlohmann::json;
namespace fs = std::filesystem;

std::string task_name(TaskKind k) {
    switch (k) {
        case TaskKind::Ioi:
            return "ioi";
        case TaskKind::GreaterThan:
            return "gt";
        case TaskKind::GenderedPronoun:
            return "gp";
        default:
            return "other";
    }
}

TaskKind task_from_name(const std::string& name) {
    if (name == "ioi") return TaskKind::Ioi;
    if (name == "gt") return TaskKind::GreaterThan;
    if (name == "gp") return TaskKind::GenderedPronoun;
    return TaskKind::Other;
}

int32_t Vocab::add(const std::string& tok) {
    auto it = index.find(tok);
    if (it != index.end()) return it->second;
    const int32_t id = static_cast<int32_t>(tokens.size());
    tokens.push_back(tok);
    index.emplace(tok, id);
    return id;
}

int32_t Vocab::id(const std::string& tok) const {
    auto it = index.find(tok);
    if (it == index.end()) throw std::runtime_error("Vocab: unknown token '" + tok + "'");
    return it->second;
}

std::optional<int32_t> Vocab::find(const std::string& tok) const {
    auto it = index.find(tok);
    if (it == index.end()) return std::nullopt;
    return it->second;
}

std::vector<int32_t> Vocab::tokenize(const std::string& text) const {
    std::vector<int32_t> out;
    std::istringstream is(text);
    std::string word;
    while (is >> word) out.push_back(id(word));
    return out;
}

std::string Vocab::detokenize(const std::vector<int32_t>& ids) const {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= size())
            throw std::runtime_error("Vocab: id out of range in detokenize");
        if (i) out += " ";
        out += tokens[ids[i]];
    }
    return out;
}

namespace {

Vocab base_vocab() {
    Vocab v;
    v.pad_id = v.add("<pad>");
    v.bos_id = v.add("<bos>");
    return v;
}

const std::vector<std::string> kIoiTemplates = {
    "Friends {A} and {B} found a {OBJ} at the {PLACE} . {B} gave it to",
    "Then {A} and {B} went to the {PLACE} . {B} gave a {OBJ} to",
    "When {A} and {B} got a {OBJ} at the {PLACE} , {B} decided to give it to",
    "Then {A} and {B} had a long argument at the {PLACE} . Afterwards {B} said it to",
    "While {A} and {B} were working at the {PLACE} , {B} gave a {OBJ} to",
    "After {A} and {B} left the {PLACE} , {B} handed the {OBJ} to",
    "Once {A} and {B} arrived at the {PLACE} , {B} passed the {OBJ} to",
    "Yesterday {A} and {B} visited the {PLACE} . There {B} showed a {OBJ} to",
    "Soon {A} and {B} returned to the {PLACE} . Then {B} brought a {OBJ} to",
    "Today {A} and {B} stopped by the {PLACE} . Later {B} sold the {OBJ} to",
};

const std::vector<std::string> kIoiNames = {
    "Mary", "John",  "Tom",   "Anna",  "James", "Sarah", "Peter",  "Lucy",  "David", "Emma",
    "Paul", "Alice", "Mark",  "Julia", "Henry", "Clara", "Frank",  "Nora",  "Leo",   "Ivy",
    "Oscar", "Ruth", "Adam",  "Elena", "Simon", "Grace", "Victor", "Diana", "Felix", "Maya",
};

const std::vector<std::string> kObjects = {"mango",  "ring",   "book",   "drink",
                                           "map",    "coin",   "snack",  "ticket",
                                           "basket", "pencil", "flower", "bottle"};

const std::vector<std::string> kPlaces = {"bar",    "store",  "park",  "station",
                                          "school", "market", "garden", "office",
                                          "beach",  "library", "cafe",  "museum"};

const std::vector<std::string> kGtTemplates = {
    "The {NOUN} lasted from the year {CC} {YY} to the year {CC}",
    "The {NOUN} went on from the year {CC} {YY} to the year {CC}",
    "The {NOUN} continued from the year {CC} {YY} until the year {CC}",
    "The {NOUN} ran from the year {CC} {YY} to the year {CC}",
    "The {NOUN} endured from the year {CC} {YY} through the year {CC}",
};

const std::vector<std::string> kGtNouns = {"war",     "reign",   "famine",  "siege",
                                           "dynasty", "empire",  "drought", "festival",
                                           "project", "treaty",  "strike",  "expedition"};

const std::vector<std::string> kGpTemplates = {
    "So {NAME} is a really great friend , isn't",
    "I think {NAME} is such a kind person , isn't",
    "Honestly {NAME} has been very helpful lately , hasn't",
    "You know {NAME} seems quite happy today , doesn't",
    "Everyone says {NAME} is a talented singer , isn't",
    "Apparently {NAME} was at the party last night , wasn't",
    "My neighbor {NAME} fixed the fence quickly , didn't",
    "Our friend {NAME} will join the trip soon , won't",
};

const std::vector<std::string> kBoyNames = {
    "Evan",   "Jacob",  "Michael", "Matthew", "Joshua", "Daniel", "Andrew", "William",
    "Joseph", "Ryan",   "Nicholas", "Tyler",  "Brandon", "Caleb", "Ethan",  "Nathan",
    "Logan",  "Aaron",  "Kevin",   "Thomas",  "Connor", "Hunter", "Adrian", "Miles",
    "Owen",   "Isaac",  "Marcus",  "Derek",   "Shane",  "Trevor",
};

const std::vector<std::string> kGirlNames = {
    "Emily",  "Hannah", "Madison", "Ashley", "Olivia", "Abigail", "Jessica", "Samantha",
    "Chloe",  "Sophia", "Natalie", "Lauren", "Megan",  "Rachel",  "Brooke",  "Kate",
    "Sydney", "Leah",   "Audrey",  "Claire", "Paige",  "Molly",   "Jenna",   "Erin",
    "Holly",  "Laura",  "Tessa",   "Fiona",  "Wendy",  "Carla",
};

std::string substitute(const std::string& tmpl,
                       const std::vector<std::pair<std::string, std::string>>& slots) {
    std::string out = tmpl;
    for (const auto& [key, value] : slots) {
        const std::string tag = "{" + key + "}";
        size_t pos;
        while ((pos = out.find(tag)) != std::string::npos) out.replace(pos, tag.size(), value);
    }
    return out;
}

std::vector<int32_t> encode(const Vocab& v, const std::string& text) {
    std::vector<int32_t> ids{v.bos_id};
    std::istringstream is(text);
    std::string word;
    while (is >> word) ids.push_back(v.id(word));
    return ids;
}

void add_words(Vocab& v, const std::string& tmpl) {
    std::istringstream is(tmpl);
    std::string word;
    while (is >> word)
        if (word.find('{') == std::string::npos) v.add(word);
}

}  // namespace

Dataset gen_ioi(const SplitSizes& sizes, int n_templates, int name_pool, uint64_t seed) {
    if (n_templates < 1 || n_templates > static_cast<int>(kIoiTemplates.size()))
        throw std::runtime_error("gen_ioi: n_templates out of range");
    if (name_pool < 3)
        throw std::runtime_error("gen_ioi: name pool must have at least 3 names");
    if (name_pool > static_cast<int>(kIoiNames.size()))
        throw std::runtime_error("gen_ioi: name pool larger than the bundled list");

    Dataset ds;
    ds.task = TaskKind::Ioi;
    ds.vocab = base_vocab();
    for (int t = 0; t < n_templates; ++t) add_words(ds.vocab, kIoiTemplates[t]);
    for (int i = 0; i < name_pool; ++i) ds.vocab.add(kIoiNames[i]);
    for (const std::string& w : kObjects) ds.vocab.add(w);
    for (const std::string& w : kPlaces) ds.vocab.add(w);

    // Disjoint splits: seeded partition of the template x ordered-name-pair
    // product space.
    struct Combo {
        int tmpl, a, b;
    };
    std::vector<Combo> combos;
    for (int t = 0; t < n_templates; ++t)
        for (int a = 0; a < name_pool; ++a)
            for (int b = 0; b < name_pool; ++b)
                if (a != b) combos.push_back({t, a, b});
    const int need = sizes.train + sizes.val + sizes.test;
    if (need > static_cast<int>(combos.size()))
        throw std::runtime_error("gen_ioi: requested " + std::to_string(need) +
                                 " examples but the disjoint space has only " +
                                 std::to_string(combos.size()));
    std::mt19937_64 rng(seed);
    std::shuffle(combos.begin(), combos.end(), rng);

    auto make_example = [&](const Combo& c) {
        ExamplePair ex;
        ex.template_id = c.tmpl;
        const std::string& A = kIoiNames[c.a];
        const std::string& B = kIoiNames[c.b];
        const std::string obj = kObjects[rng() % kObjects.size()];
        const std::string place = kPlaces[rng() % kPlaces.size()];
        // corruption: name slots replaced by another random pair, keeping the
        // answer different from the clean one
        int a2, b2;
        do {
            a2 = static_cast<int>(rng() % name_pool);
            b2 = static_cast<int>(rng() % name_pool);
        } while (a2 == b2 || a2 == c.a);
        ex.clean_text = substitute(kIoiTemplates[c.tmpl],
                                   {{"A", A}, {"B", B}, {"OBJ", obj}, {"PLACE", place}});
        ex.corrupted_text =
            substitute(kIoiTemplates[c.tmpl], {{"A", kIoiNames[a2]},
                                               {"B", kIoiNames[b2]},
                                               {"OBJ", obj},
                                               {"PLACE", place}});
        ex.clean_tokens = encode(ds.vocab, ex.clean_text);
        ex.corrupted_tokens = encode(ds.vocab, ex.corrupted_text);
        ex.answer_id = ds.vocab.id(A);
        ex.misleading_id = ds.vocab.id(B);
        ex.answer_position = static_cast<int>(ex.clean_tokens.size()) - 1;
        return ex;
    };

    int k = 0;
    for (int i = 0; i < sizes.train; ++i) ds.train.push_back(make_example(combos[k++]));
    for (int i = 0; i < sizes.val; ++i) ds.val.push_back(make_example(combos[k++]));
    for (int i = 0; i < sizes.test; ++i) ds.test.push_back(make_example(combos[k++]));
    return ds;
}

Dataset gen_greater_than(const SplitSizes& sizes, uint64_t seed) {
    Dataset ds;
    ds.task = TaskKind::GreaterThan;
    ds.vocab = base_vocab();
    for (const std::string& t : kGtTemplates) add_words(ds.vocab, t);
    for (const std::string& w : kGtNouns) ds.vocab.add(w);
    char buf[3];
    for (int v = 0; v < 100; ++v) {
        std::snprintf(buf, sizeof(buf), "%02d", v);
        ds.two_digit_ids.push_back(ds.vocab.add(buf));
    }

    struct Combo {
        int tmpl, noun, century, yy;
    };
    std::vector<Combo> combos;
    for (int t = 0; t < static_cast<int>(kGtTemplates.size()); ++t)
        for (int n = 0; n < static_cast<int>(kGtNouns.size()); ++n)
            for (int c = 11; c <= 21; ++c)
                for (int yy = 2; yy <= 98; ++yy) combos.push_back({t, n, c, yy});
    const int need = sizes.train + sizes.val + sizes.test;
    if (need > static_cast<int>(combos.size()))
        throw std::runtime_error("gen_greater_than: requested sizes exceed the disjoint space");
    std::mt19937_64 rng(seed);
    std::shuffle(combos.begin(), combos.end(), rng);

    auto two = [&](int v) {
        char b[3];
        std::snprintf(b, sizeof(b), "%02d", v);
        return std::string(b);
    };

    auto make_example = [&](const Combo& c) {
        ExamplePair ex;
        ex.template_id = c.tmpl;
        ex.gt_yy = c.yy;
        // corrupted example: noun and start year swapped with another sample
        int noun2 = static_cast<int>(rng() % kGtNouns.size());
        int yy2;
        do {
            yy2 = 2 + static_cast<int>(rng() % 97);
        } while (yy2 == c.yy);
        ex.clean_text = substitute(
            kGtTemplates[c.tmpl],
            {{"NOUN", kGtNouns[c.noun]}, {"CC", two(c.century)}, {"YY", two(c.yy)}});
        ex.corrupted_text = substitute(
            kGtTemplates[c.tmpl],
            {{"NOUN", kGtNouns[noun2]}, {"CC", two(c.century)}, {"YY", two(yy2)}});
        ex.clean_tokens = encode(ds.vocab, ex.clean_text);
        ex.corrupted_tokens = encode(ds.vocab, ex.corrupted_text);
        const int answer_val = c.yy + 1 + static_cast<int>(rng() % (99 - c.yy));
        ex.answer_id = ds.vocab.id(two(answer_val));
        ex.answer_position = static_cast<int>(ex.clean_tokens.size()) - 1;
        return ex;
    };

    int k = 0;
    for (int i = 0; i < sizes.train; ++i) ds.train.push_back(make_example(combos[k++]));
    for (int i = 0; i < sizes.val; ++i) ds.val.push_back(make_example(combos[k++]));
    for (int i = 0; i < sizes.test; ++i) ds.test.push_back(make_example(combos[k++]));
    return ds;
}

Dataset gen_gendered_pronoun(const SplitSizes& sizes, uint64_t seed) {
    if (kBoyNames.empty() || kGirlNames.empty())
        throw std::runtime_error("gen_gendered_pronoun: empty name list");
    Dataset ds;
    ds.task = TaskKind::GenderedPronoun;
    ds.vocab = base_vocab();
    for (const std::string& t : kGpTemplates) add_words(ds.vocab, t);
    for (const std::string& n : kBoyNames) ds.vocab.add(n);
    for (const std::string& n : kGirlNames) ds.vocab.add(n);
    const int32_t he = ds.vocab.add("he");
    const int32_t she = ds.vocab.add("she");

    struct Combo {
        int tmpl, name;  // name < boys => boy, else girl index + boys
    };
    const int nb = static_cast<int>(kBoyNames.size());
    const int ng = static_cast<int>(kGirlNames.size());
    std::vector<Combo> combos;
    for (int t = 0; t < static_cast<int>(kGpTemplates.size()); ++t)
        for (int n = 0; n < nb + ng; ++n) combos.push_back({t, n});
    const int need = sizes.train + sizes.val + sizes.test;
    if (need > static_cast<int>(combos.size()))
        throw std::runtime_error("gen_gendered_pronoun: requested sizes exceed the space");
    std::mt19937_64 rng(seed);
    std::shuffle(combos.begin(), combos.end(), rng);

    auto make_example = [&](const Combo& c) {
        ExamplePair ex;
        ex.template_id = c.tmpl;
        const bool boy = c.name < nb;
        const std::string& name = boy ? kBoyNames[c.name] : kGirlNames[c.name - nb];
        // corruption swaps in an opposite-gender name, flipping the answer
        const std::string& other =
            boy ? kGirlNames[rng() % ng] : kBoyNames[rng() % nb];
        ex.clean_text = substitute(kGpTemplates[c.tmpl], {{"NAME", name}});
        ex.corrupted_text = substitute(kGpTemplates[c.tmpl], {{"NAME", other}});
        ex.clean_tokens = encode(ds.vocab, ex.clean_text);
        ex.corrupted_tokens = encode(ds.vocab, ex.corrupted_text);
        ex.answer_id = boy ? he : she;
        ex.misleading_id = boy ? she : he;
        ex.answer_position = static_cast<int>(ex.clean_tokens.size()) - 1;
        return ex;
    };

    int k = 0;
    for (int i = 0; i < sizes.train; ++i) ds.train.push_back(make_example(combos[k++]));
    for (int i = 0; i < sizes.val; ++i) ds.val.push_back(make_example(combos[k++]));
    for (int i = 0; i < sizes.test; ++i) ds.test.push_back(make_example(combos[k++]));
    return ds;
}

// ---------------------------------------------------------------------------
// Dataset IO

namespace {

json example_to_json(const ExamplePair& ex) {
    json j;
    j["clean_tokens"] = ex.clean_tokens;
    j["corrupted_tokens"] = ex.corrupted_tokens;
    j["answer_id"] = ex.answer_id;
    if (ex.misleading_id)
        j["misleading_id"] = *ex.misleading_id;
    else
        j["misleading_id"] = nullptr;
    j["answer_position"] = ex.answer_position;
    j["template_id"] = ex.template_id;
    if (ex.gt_yy) j["gt_yy"] = *ex.gt_yy;
    j["clean_text"] = ex.clean_text;
    j["corrupted_text"] = ex.corrupted_text;
    return j;
}

ExamplePair example_from_json(const json& j) {
    ExamplePair ex;
    ex.clean_tokens = j.at("clean_tokens").get<std::vector<int32_t>>();
    ex.corrupted_tokens = j.at("corrupted_tokens").get<std::vector<int32_t>>();
    ex.answer_id = j.at("answer_id").get<int32_t>();
    if (!j.at("misleading_id").is_null()) ex.misleading_id = j.at("misleading_id").get<int32_t>();
    ex.answer_position = j.at("answer_position").get<int>();
    ex.template_id = j.at("template_id").get<int>();
    if (j.contains("gt_yy")) ex.gt_yy = j.at("gt_yy").get<int>();
    ex.clean_text = j.at("clean_text").get<std::string>();
    ex.corrupted_text = j.at("corrupted_text").get<std::string>();
    return ex;
}

void write_split(const std::vector<ExamplePair>& split, const std::string& path) {
    std::ostringstream os;
    for (const ExamplePair& ex : split) os << example_to_json(ex).dump() << "\n";
    write_text_file(path, os.str());
}

std::vector<ExamplePair> read_split(const std::string& path) {
    std::vector<ExamplePair> out;
    std::istringstream is(read_text_file(path));
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        out.push_back(example_from_json(json::parse(line)));
    }
    return out;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    json v;
    v["tokens"] = ds.vocab.tokens;
    v["pad_id"] = ds.vocab.pad_id;
    v["bos_id"] = ds.vocab.bos_id;
    write_text_file(dir + "/vocab.json", v.dump(2));
    json meta;
    meta["task"] = task_name(ds.task);
    write_text_file(dir + "/meta.json", meta.dump(2));
    write_split(ds.train, dir + "/train.jsonl");
    write_split(ds.val, dir + "/val.jsonl");
    write_split(ds.test, dir + "/test.jsonl");
}

Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    json v = json::parse(read_text_file(dir + "/vocab.json"));
    for (const auto& tok : v.at("tokens")) ds.vocab.add(tok.get<std::string>());
    ds.vocab.pad_id = v.at("pad_id").get<int32_t>();
    ds.vocab.bos_id = v.at("bos_id").get<int32_t>();
    json meta = json::parse(read_text_file(dir + "/meta.json"));
    ds.task = task_from_name(meta.at("task").get<std::string>());
    ds.train = read_split(dir + "/train.jsonl");
    ds.val = read_split(dir + "/val.jsonl");
    ds.test = read_split(dir + "/test.jsonl");
    if (ds.task == TaskKind::GreaterThan) {
        char buf[3];
        for (int i = 0; i < 100; ++i) {
            std::snprintf(buf, sizeof(buf), "%02d", i);
            ds.two_digit_ids.push_back(ds.vocab.id(buf));
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Batching

Batch make_batch(const std::vector<ExamplePair>& examples, const std::vector<int>& idx,
                 int32_t pad_id, bool corrupted) {
    Batch b;
    b.batch = static_cast<int>(idx.size());
    b.seq = 0;
    for (int i : idx)
        b.seq = std::max(b.seq, static_cast<int>(examples[i].clean_tokens.size()));
    b.tokens.assign(static_cast<size_t>(b.batch) * b.seq, pad_id);
    b.lengths.resize(idx.size());
    for (size_t r = 0; r < idx.size(); ++r) {
        const auto& toks =
            corrupted ? examples[idx[r]].corrupted_tokens : examples[idx[r]].clean_tokens;
        std::copy(toks.begin(), toks.end(), b.tokens.begin() + r * b.seq);
        b.lengths[r] = static_cast<int>(toks.size());
    }
    return b;
}

// ---------------------------------------------------------------------------
// Toy training

float toy_accuracy(const DisentangledTransformer& model, const Dataset& ds,
                   const std::vector<ExamplePair>& split, int batch_size) {
    NoGradScope ng;
    const int V = model.config().vocab_size;
    int hits = 0;
    std::vector<int> idx;
    for (size_t start = 0; start < split.size(); start += batch_size) {
        idx.clear();
        for (size_t i = start; i < std::min(split.size(), start + batch_size); ++i)
            idx.push_back(static_cast<int>(i));
        Batch batch = make_batch(split, idx, ds.vocab.pad_id, false);
        ForwardResult res = model.forward_standard(batch);
        const float* pl = res.logits.data();
        for (size_t r = 0; r < idx.size(); ++r) {
            const ExamplePair& ex = split[idx[r]];
            const float* row = pl + (r * batch.seq + ex.answer_position) * V;
            if (ds.task == TaskKind::GreaterThan) {
                int32_t best = ds.two_digit_ids[0];
                for (int32_t id : ds.two_digit_ids)
                    if (row[id] > row[best]) best = id;
                int val = -1;
                for (int v = 0; v < 100; ++v)
                    if (ds.two_digit_ids[v] == best) val = v;
                if (val > ex.gt_yy.value()) ++hits;
            } else {
                int32_t best = 0;
                for (int32_t v = 1; v < V; ++v)
                    if (row[v] > row[best]) best = v;
                if (best == ex.answer_id) ++hits;
            }
        }
    }
    return split.empty() ? 0.0f : static_cast<float>(hits) / static_cast<float>(split.size());
}

DisentangledTransformer train_toy_lm(const Dataset& ds, const ToyTrainConfig& cfg) {
    if (ds.train.empty() || ds.val.empty())
        throw std::runtime_error("train_toy_lm: dataset has empty splits");
    ModelConfig mc = cfg.model;
    mc.vocab_size = ds.vocab.size();
    int max_len = 0;
    for (const ExamplePair& ex : ds.train)
        max_len = std::max(max_len, static_cast<int>(ex.clean_tokens.size()));
    for (const ExamplePair& ex : ds.val)
        max_len = std::max(max_len, static_cast<int>(ex.clean_tokens.size()));
    for (const ExamplePair& ex : ds.test)
        max_len = std::max(max_len, static_cast<int>(ex.clean_tokens.size()));
    mc.max_seq = std::max(mc.max_seq, max_len);

    DisentangledTransformer model = DisentangledTransformer::random_init(mc, cfg.seed, 0.05f);
    model.set_requires_grad(true);
    Adam opt(model.parameter_list(), cfg.lr);

    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<int> perm(ds.train.size());
    std::iota(perm.begin(), perm.end(), 0);
    size_t cursor = perm.size();

    float best_acc = 0.0f;
    const int V = mc.vocab_size;
    for (int step = 1; step <= cfg.max_steps; ++step) {
        std::vector<int> idx;
        for (int i = 0; i < cfg.batch_size; ++i) {
            if (cursor == perm.size()) {
                std::shuffle(perm.begin(), perm.end(), rng);
                cursor = 0;
            }
            idx.push_back(perm[cursor++]);
        }
        Batch batch = make_batch(ds.train, idx, ds.vocab.pad_id, false);

        Tape tape;
        TapeScope scope(tape);
        ForwardResult res = model.forward_standard(batch);
        Tensor logp = log_softmax_last(res.logits);
        // -mean log p(answer) via a constant selection mask
        Tensor sel = Tensor::zeros({batch.batch, batch.seq, V});
        float* ps = sel.data();
        for (size_t r = 0; r < idx.size(); ++r) {
            const ExamplePair& ex = ds.train[idx[r]];
            ps[(r * batch.seq + ex.answer_position) * V + ex.answer_id] =
                -1.0f / static_cast<float>(idx.size());
        }
        Tensor loss = sum_all(mul(logp, sel));
        if (!std::isfinite(loss.item()))
            throw std::runtime_error("train_toy_lm: loss diverged at step " +
                                     std::to_string(step));
        opt.zero_grad();
        tape.backward(loss);
        opt.step();

        if (step % cfg.eval_every == 0 || step == cfg.max_steps) {
            const float acc = toy_accuracy(model, ds, ds.val);
            best_acc = std::max(best_acc, acc);
            if (cfg.verbose)
                std::fprintf(stderr, "[train-toy] step %d loss %.4f val acc %.3f\n", step,
                             loss.item(), acc);
            if (acc >= cfg.accuracy_bar) {
                model.set_requires_grad(false);
                return model;
            }
        }
    }
    throw ToyTrainFailure("train_toy_lm: accuracy bar " + std::to_string(cfg.accuracy_bar) +
                              " not reached; best " + std::to_string(best_acc),
                          best_acc);
}

}  // namespace edgeprune
