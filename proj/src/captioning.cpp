#include "aciec/captioning.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "aciec/encoders.hpp"  // content_hash

using nlohmann::json;

namespace aciec::captioning {

std::string MockChatClient::generate(const std::string& prompt, int sample_index) {
    const std::vector<std::string>* responses = nullptr;
    for (const auto& rule : rules_)
        if (prompt.find(rule.match) != std::string::npos) {
            responses = &rule.responses;
            break;
        }
    if (!responses) responses = &default_responses_;
    if (responses->empty())
        throw ClientError("mock chat client: no scripted response for prompt");
    return (*responses)[static_cast<size_t>(sample_index) % responses->size()];
}

void MockChatClient::add_rule(const std::string& match, std::vector<std::string> responses) {
    rules_.push_back({match, std::move(responses)});
}

void MockChatClient::set_default(std::vector<std::string> responses) {
    default_responses_ = std::move(responses);
}

// Fixture: {"rules": [{"match": str, "responses": [str]}], "default": [str]}
void MockChatClient::load_fixture(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open chat fixture: " + path);
    json j = json::parse(in);
    for (const auto& r : j.value("rules", json::array()))
        add_rule(r.at("match").get<std::string>(),
                 r.at("responses").get<std::vector<std::string>>());
    if (j.contains("default"))
        set_default(j["default"].get<std::vector<std::string>>());
}

RemoteChatClient::RemoteChatClient(std::string endpoint, std::string model_name,
                                   double temperature, std::string cache_dir)
    : endpoint_(std::move(endpoint)), model_name_(std::move(model_name)),
      temperature_(temperature), cache_dir_(std::move(cache_dir)) {
    if (!cache_dir_.empty()) std::filesystem::create_directories(cache_dir_);
}

std::string RemoteChatClient::generate(const std::string& prompt, int sample_index) {
    std::filesystem::path cache_file;
    if (!cache_dir_.empty()) {
        cache_file = std::filesystem::path(cache_dir_) /
                     (encoders::content_hash(prompt) + "_" + std::to_string(sample_index) + ".txt");
        if (std::ifstream cached(cache_file); cached) {
            std::ostringstream ss;
            ss << cached.rdbuf();
            return ss.str();
        }
    }
    httplib::Client http(endpoint_);
    json body{{"model", model_name_},
              {"prompt", prompt},
              {"sample_index", sample_index},
              {"temperature", temperature_}};
    auto res = http.Post("/generate", body.dump(), "application/json");
    if (!res || res->status != 200)
        throw ClientError("chat endpoint " + endpoint_ + " failed" +
                          (res ? " with status " + std::to_string(res->status) : ""));
    std::string text = json::parse(res->body).at("text").get<std::string>();
    if (!cache_file.empty()) std::ofstream(cache_file) << text;
    return text;
}

std::unique_ptr<ChatClient> make_chat_client(const ChatConfig& cfg) {
    if (cfg.kind == "mock") {
        auto client = std::make_unique<MockChatClient>();
        if (!cfg.fixture.empty()) client->load_fixture(cfg.fixture);
        return client;
    }
    if (cfg.kind == "remote") {
        if (cfg.endpoint.empty()) throw UsageError("remote chat client needs an endpoint");
        return std::make_unique<RemoteChatClient>(cfg.endpoint, cfg.model_name,
                                                  cfg.temperature, cfg.cache_dir);
    }
    throw UsageError("unknown chat client kind: " + cfg.kind);
}

std::string build_eacot_prompt(const core::EmotionTaxonomy& taxonomy) {
    std::ostringstream p;
    p << "You are an expert in emotional psychology. "
      << "Please analyze the image across four emotional attributes. "
      << "Let's think it step by step.\n"
      << "Step 1: Describe the four emotional attributes of the image: "
      << "the Scene, the salient Objects, any Facial expressions, and any Human actions.\n"
      << "Step 2: Describe the relationships among the objects, and the interaction "
      << "between the objects and the surrounding scene.\n"
      << "Step 3: Based on the above, write one concise affective caption (a single "
      << "sentence of at most 60 words) that conveys the emotion of the image";
    if (!taxonomy.classes.empty()) {
        p << ", considering emotions such as ";
        for (size_t i = 0; i < taxonomy.classes.size(); ++i)
            p << (i ? ", " : "") << taxonomy.classes[i];
    }
    p << ".\n"
      << "Answer using exactly these labeled lines:\n"
      << "SCENE: <scene description>\n"
      << "OBJECTS: <object; object; ...>\n"
      << "EXPRESSIONS: <expression; expression; ...>\n"
      << "ACTIONS: <action; action; ...>\n"
      << "RELATIONS: <relationships among objects>\n"
      << "SCENE_INTERACTION: <interaction between objects and scene>\n"
      << "CAPTION: <the final affective caption>\n";
    return p.str();
}

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ';')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    if (out.empty()) out.push_back("none observed");
    return out;
}

}  // namespace

ReasoningChain parse_reasoning_chain(const std::string& raw) {
    if (trim(raw).empty()) throw DataError("parse_reasoning_chain: empty response");

    static const std::vector<std::string> headers = {
        "SCENE:", "OBJECTS:", "EXPRESSIONS:", "ACTIONS:",
        "RELATIONS:", "SCENE_INTERACTION:", "CAPTION:"};

    std::map<std::string, std::string> sections;
    std::string current;
    std::istringstream ss(raw);
    std::string line;
    while (std::getline(ss, line)) {
        bool matched = false;
        for (const auto& h : headers) {
            // SCENE: must not swallow SCENE_INTERACTION:
            if (line.rfind(h, 0) == 0 &&
                !(h == "SCENE:" && line.rfind("SCENE_INTERACTION:", 0) == 0)) {
                current = h;
                sections[current] = trim(line.substr(h.size()));
                matched = true;
                break;
            }
        }
        if (!matched && !current.empty()) {
            std::string extra = trim(line);
            if (!extra.empty())
                sections[current] += (sections[current].empty() ? "" : " ") + extra;
        }
    }

    auto require = [&](const std::string& h, const std::string& name) -> std::string {
        auto it = sections.find(h);
        if (it == sections.end())
            throw DataError("parse_reasoning_chain: missing section '" + name + "'");
        return it->second;
    };

    ReasoningChain chain;
    chain.attributes.scene = require("SCENE:", "scene");
    chain.attributes.objects = split_list(require("OBJECTS:", "objects"));
    chain.attributes.facial_expressions = split_list(require("EXPRESSIONS:", "expressions"));
    chain.attributes.human_actions = split_list(require("ACTIONS:", "actions"));
    chain.object_relations = require("RELATIONS:", "relations");
    if (chain.object_relations.empty()) chain.object_relations = "none observed";
    chain.object_scene_interaction = require("SCENE_INTERACTION:", "scene_interaction");
    if (chain.object_scene_interaction.empty()) chain.object_scene_interaction = "none observed";
    chain.caption = require("CAPTION:", "caption");
    if (chain.caption.empty())
        throw DataError("parse_reasoning_chain: missing section 'caption'");
    return chain;
}

std::vector<ReasoningChain> generate_chains(ChatClient& client, const std::string& prompt,
                                            int k) {
    if (k < 1) throw DataError("generate_chains: k must be >= 1");
    std::vector<ReasoningChain> chains;
    std::vector<std::string> failures;
    for (int i = 0; i < k; ++i) {
        std::string raw = client.generate(prompt, i);
        try {
            chains.push_back(parse_reasoning_chain(raw));
        } catch (const std::exception& e) {
            failures.push_back("chain " + std::to_string(i) + ": " + e.what());
        }
    }
    if (!failures.empty()) {
        std::string msg = "generate_chains: " + std::to_string(failures.size()) +
                          " of " + std::to_string(k) + " chains failed to parse";
        for (const auto& f : failures) msg += "; " + f;
        throw ClientError(msg);
    }
    return chains;
}

double exact_match_similarity(const std::string& a, const std::string& b) {
    auto normalize = [](const std::string& s) {
        std::string out;
        bool in_space = true;
        for (char c : s) {
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (!in_space) out.push_back(' ');
                in_space = true;
            } else {
                out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
                in_space = false;
            }
        }
        while (!out.empty() && out.back() == ' ') out.pop_back();
        return out;
    };
    return normalize(a) == normalize(b) ? 1.0 : 0.0;
}

AffectiveCaption aggregate_self_consistency(const std::vector<ReasoningChain>& chains,
                                            const CaptionSimilarity& similarity,
                                            double merge_threshold) {
    if (chains.empty()) throw DataError("aggregate_self_consistency: no chains");
    if (merge_threshold < 0 || merge_threshold > 1)
        throw DataError("aggregate_self_consistency: merge_threshold out of [0, 1]");

    // Greedy clustering against each cluster's first (lowest-index) member.
    std::vector<std::vector<size_t>> clusters;
    for (size_t i = 0; i < chains.size(); ++i) {
        bool placed = false;
        for (auto& cluster : clusters)
            if (similarity(chains[cluster.front()].caption, chains[i].caption) >=
                merge_threshold) {
                cluster.push_back(i);
                placed = true;
                break;
            }
        if (!placed) clusters.push_back({i});
    }

    // Majority vote; ties by lowest first-member index (clusters are already
    // ordered by first member).
    size_t winner = 0;
    for (size_t c = 1; c < clusters.size(); ++c)
        if (clusters[c].size() > clusters[winner].size()) winner = c;
    const auto& members = clusters[winner];

    // Medoid: max mean similarity to cluster peers, ties by lowest index.
    size_t medoid = members.front();
    double best_mean = -1.0;
    for (size_t m : members) {
        double sum = 0;
        for (size_t other : members)
            if (other != m) sum += similarity(chains[m].caption, chains[other].caption);
        double mean = members.size() > 1 ? sum / static_cast<double>(members.size() - 1) : 0.0;
        if (mean > best_mean) {
            best_mean = mean;
            medoid = m;
        }
    }

    AffectiveCaption caption;
    caption.text = chains[medoid].caption;
    caption.source_chain_indices.assign(members.begin(), members.end());
    return caption;
}

}  // namespace aciec::captioning
