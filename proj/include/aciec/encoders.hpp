#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "aciec/core.hpp"

namespace aciec::encoders {

struct EmbeddingVector {
    std::vector<double> values;

    size_t dim() const { return values.size(); }
};

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v);

// "A photo of a {noun}"
std::string noun_prompt(const std::string& noun);

class EncoderClient {
  public:
    virtual ~EncoderClient() = default;
    virtual EmbeddingVector encode_image(const core::ImageRecord& record) = 0;
    virtual EmbeddingVector encode_text(const std::string& text) = 0;
    virtual size_t dim() const = 0;
};

// Deterministic test client. Text is hashed token-wise into a fixed basis;
// images resolve through a declared lookup table (record id -> embedding or
// "text:<prompt>" alias). Records absent from the table fall back to the
// embedding of their own noun prompt, i.e. similarity 1.
class ToyEncoderClient : public EncoderClient {
  public:
    explicit ToyEncoderClient(size_t dim = 64) : dim_(dim) {}

    EmbeddingVector encode_image(const core::ImageRecord& record) override;
    EmbeddingVector encode_text(const std::string& text) override;
    size_t dim() const override { return dim_; }

    void set_image_embedding(const std::string& record_id, EmbeddingVector v);
    void set_image_alias(const std::string& record_id, const std::string& text);
    void load_fixture(const std::string& path);

  private:
    size_t dim_;
    std::map<std::string, EmbeddingVector> image_table_;
    std::map<std::string, std::string> alias_table_;
};

// HTTP adapter for a production encoder service. POSTs JSON to
// {endpoint}/encode_text and {endpoint}/encode_image and caches replies on
// disk keyed by content hash, so repeated runs are offline-reproducible.
class RemoteEncoderClient : public EncoderClient {
  public:
    RemoteEncoderClient(std::string endpoint, size_t dim, std::string cache_dir);

    EmbeddingVector encode_image(const core::ImageRecord& record) override;
    EmbeddingVector encode_text(const std::string& text) override;
    size_t dim() const override { return dim_; }

  private:
    EmbeddingVector request(const std::string& route, const std::string& body,
                            const std::string& cache_key);

    std::string endpoint_;
    size_t dim_;
    std::string cache_dir_;
};

// FNV-1a 64-bit over raw bytes, hex-encoded; cache key material.
std::string content_hash(const std::string& bytes);

struct FilterResult {
    std::vector<core::ImageRecord> retained;
    std::vector<core::ImageRecord> removed;
};

// Keeps records whose image/noun-prompt similarity is >= threshold.
FilterResult filter_dataset(const std::vector<core::ImageRecord>& records,
                            EncoderClient& client, double threshold);

struct EncoderConfig {
    std::string kind = "toy";  // "toy" | "remote"
    size_t dim = 64;
    std::string endpoint;
    std::string cache_dir;
    std::string fixture;  // toy image table, optional
};

std::unique_ptr<EncoderClient> make_encoder_client(const EncoderConfig& cfg);

}  // namespace aciec::encoders
