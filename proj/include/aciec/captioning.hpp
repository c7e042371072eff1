#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aciec/core.hpp"

namespace aciec::captioning {

struct EmotionalAttributes {
    std::string scene;
    std::vector<std::string> objects;
    std::vector<std::string> facial_expressions;
    std::vector<std::string> human_actions;
};

struct ReasoningChain {
    EmotionalAttributes attributes;
    std::string object_relations;
    std::string object_scene_interaction;
    std::string caption;
};

struct AffectiveCaption {
    std::string text;
    std::vector<size_t> source_chain_indices;  // chains that voted for it
};

class ChatClient {
  public:
    virtual ~ChatClient() = default;
    virtual std::string generate(const std::string& prompt, int sample_index) = 0;
};

// Scripted deterministic client. Rules match on a prompt substring and yield
// a response per sample index (cycling when fewer responses than samples).
class MockChatClient : public ChatClient {
  public:
    std::string generate(const std::string& prompt, int sample_index) override;

    void add_rule(const std::string& match, std::vector<std::string> responses);
    void set_default(std::vector<std::string> responses);
    void load_fixture(const std::string& path);

  private:
    struct Rule {
        std::string match;
        std::vector<std::string> responses;
    };
    std::vector<Rule> rules_;
    std::vector<std::string> default_responses_;
};

// HTTP adapter; replies cached on disk by (prompt hash, sample index).
class RemoteChatClient : public ChatClient {
  public:
    RemoteChatClient(std::string endpoint, std::string model_name, double temperature,
                     std::string cache_dir);
    std::string generate(const std::string& prompt, int sample_index) override;

  private:
    std::string endpoint_;
    std::string model_name_;
    double temperature_;
    std::string cache_dir_;
};

struct ChatConfig {
    std::string kind = "mock";  // "mock" | "remote"
    std::string endpoint;
    std::string model_name;
    double temperature = 0.7;
    std::string cache_dir;
    std::string fixture;  // mock rules, optional
};

std::unique_ptr<ChatClient> make_chat_client(const ChatConfig& cfg);

// Three-step prompt over the four emotional attributes, instructing the
// model to emit the sectioned wire format parse_reasoning_chain consumes.
std::string build_eacot_prompt(const core::EmotionTaxonomy& taxonomy);

ReasoningChain parse_reasoning_chain(const std::string& raw);

std::vector<ReasoningChain> generate_chains(ChatClient& client, const std::string& prompt,
                                            int k);

using CaptionSimilarity = std::function<double(const std::string&, const std::string&)>;

// 1 when the captions match after lowercasing and whitespace collapsing.
double exact_match_similarity(const std::string& a, const std::string& b);

// Majority vote over similarity clusters; the winner's medoid caption.
AffectiveCaption aggregate_self_consistency(const std::vector<ReasoningChain>& chains,
                                            const CaptionSimilarity& similarity,
                                            double merge_threshold);

}  // namespace aciec::captioning
