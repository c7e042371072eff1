#include "aciec/encoders.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

using nlohmann::json;

namespace aciec::encoders {

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
    if (u.dim() != v.dim())
        throw DataError("cosine_similarity: dimension mismatch (" +
                        std::to_string(u.dim()) + " vs " + std::to_string(v.dim()) + ")");
    double dot = 0, nu = 0, nv = 0;
    for (size_t i = 0; i < u.dim(); ++i) {
        dot += u.values[i] * v.values[i];
        nu += u.values[i] * u.values[i];
        nv += v.values[i] * v.values[i];
    }
    if (nu == 0.0 || nv == 0.0)
        throw DataError("cosine_similarity: undefined similarity for zero-norm input");
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

std::string noun_prompt(const std::string& noun) {
    if (noun.empty()) throw DataError("noun_prompt: empty noun");
    return "A photo of a " + noun;
}

EmbeddingVector ToyEncoderClient::encode_text(const std::string& text) {
    EmbeddingVector v;
    v.values.assign(dim_, 0.0);
    std::istringstream iss(text);
    std::string token;
    while (iss >> token)
        v.values[std::hash<std::string>{}(token) % dim_] += 1.0;
    double norm = 0;
    for (double x : v.values) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0)
        for (double& x : v.values) x /= norm;
    return v;
}

EmbeddingVector ToyEncoderClient::encode_image(const core::ImageRecord& record) {
    if (auto it = image_table_.find(record.id); it != image_table_.end()) return it->second;
    if (auto it = alias_table_.find(record.id); it != alias_table_.end())
        return encode_text(it->second);
    if (!record.anp_label)
        throw ClientError("toy encoder: no embedding known for record '" + record.id + "'");
    return encode_text(noun_prompt(record.anp_label->noun));
}

void ToyEncoderClient::set_image_embedding(const std::string& record_id, EmbeddingVector v) {
    if (v.dim() != dim_) throw DataError("toy encoder: fixture dim mismatch");
    image_table_[record_id] = std::move(v);
}

void ToyEncoderClient::set_image_alias(const std::string& record_id, const std::string& text) {
    alias_table_[record_id] = text;
}

// Fixture format: {"dim": int, "images": {id: [floats] | "text:<string>"}}
void ToyEncoderClient::load_fixture(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open encoder fixture: " + path);
    json j = json::parse(in);
    if (j.contains("dim")) dim_ = j["dim"].get<size_t>();
    for (auto& [id, val] : j.at("images").items()) {
        if (val.is_string()) {
            std::string s = val.get<std::string>();
            if (s.rfind("text:", 0) == 0) s = s.substr(5);
            set_image_alias(id, s);
        } else {
            set_image_embedding(id, EmbeddingVector{val.get<std::vector<double>>()});
        }
    }
}

std::string content_hash(const std::string& bytes) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RemoteEncoderClient::RemoteEncoderClient(std::string endpoint, size_t dim,
                                         std::string cache_dir)
    : endpoint_(std::move(endpoint)), dim_(dim), cache_dir_(std::move(cache_dir)) {
    if (!cache_dir_.empty()) std::filesystem::create_directories(cache_dir_);
}

EmbeddingVector RemoteEncoderClient::request(const std::string& route,
                                             const std::string& body,
                                             const std::string& cache_key) {
    std::filesystem::path cache_file;
    if (!cache_dir_.empty()) {
        cache_file = std::filesystem::path(cache_dir_) / (cache_key + ".json");
        if (std::ifstream cached(cache_file); cached) {
            json j = json::parse(cached);
            return EmbeddingVector{j.at("embedding").get<std::vector<double>>()};
        }
    }
    httplib::Client http(endpoint_);
    auto res = http.Post(route, body, "application/json");
    if (!res || res->status != 200)
        throw ClientError("encoder endpoint " + endpoint_ + route + " failed" +
                          (res ? " with status " + std::to_string(res->status) : ""));
    json j = json::parse(res->body);
    EmbeddingVector v{j.at("embedding").get<std::vector<double>>()};
    if (v.dim() != dim_)
        throw ClientError("encoder endpoint returned dim " + std::to_string(v.dim()) +
                          ", expected " + std::to_string(dim_));
    if (!cache_file.empty()) {
        std::ofstream out(cache_file);
        out << json{{"embedding", v.values}}.dump();
    }
    return v;
}

EmbeddingVector RemoteEncoderClient::encode_text(const std::string& text) {
    json body{{"text", text}};
    return request("/encode_text", body.dump(), "t_" + content_hash(text));
}

EmbeddingVector RemoteEncoderClient::encode_image(const core::ImageRecord& record) {
    std::string content;
    if (!record.path.empty()) {
        std::ifstream in(record.path, std::ios::binary);
        if (!in) throw DataError("cannot read pixel source for record '" + record.id + "'");
        std::ostringstream ss;
        ss << in.rdbuf();
        content = ss.str();
    } else {
        content = record.id;
    }
    json body{{"id", record.id}, {"path", record.path}};
    return request("/encode_image", body.dump(), "i_" + content_hash(content));
}

FilterResult filter_dataset(const std::vector<core::ImageRecord>& records,
                            EncoderClient& client, double threshold) {
    if (threshold < -1.0 || threshold > 1.0)
        throw DataError("filter_dataset: threshold out of [-1, 1]");
    FilterResult result;
    for (const auto& record : records) {
        if (!record.anp_label)
            throw DataError("filter_dataset: record '" + record.id + "' has no ANP label");
        EmbeddingVector fv, ft;
        try {
            fv = client.encode_image(record);
            ft = client.encode_text(noun_prompt(record.anp_label->noun));
        } catch (const DataError&) {
            throw;
        } catch (const std::exception& e) {
            throw ClientError("encoder failed on record '" + record.id + "': " + e.what());
        }
        double s_vt = cosine_similarity(fv, ft);
        (s_vt >= threshold ? result.retained : result.removed).push_back(record);
    }
    return result;
}

std::unique_ptr<EncoderClient> make_encoder_client(const EncoderConfig& cfg) {
    if (cfg.kind == "toy") {
        auto client = std::make_unique<ToyEncoderClient>(cfg.dim);
        if (!cfg.fixture.empty()) client->load_fixture(cfg.fixture);
        return client;
    }
    if (cfg.kind == "remote") {
        if (cfg.endpoint.empty()) throw UsageError("remote encoder needs an endpoint");
        return std::make_unique<RemoteEncoderClient>(cfg.endpoint, cfg.dim, cfg.cache_dir);
    }
    throw UsageError("unknown encoder kind: " + cfg.kind);
}

}  // namespace aciec::encoders
