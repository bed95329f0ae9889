#pragma once

#include "steercal/model.hpp"
#include "steercal/retrieval.hpp"

#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace steercal {

// Model-server protocol: one JSON object per line in each direction.
//
//   {"op":"handshake"}
//     -> {"protocol":1,"L":..,"d":..,"V":..,"max_seq_len":..,"options":{"0":id,..,"3":id},
//         "encodings":["json","f32le"],"embed_dim":n|null}
//   {"op":"forward","tokens":[..],"capture_layers":[..],
//    "intervention":{"layer":l,"vector":[..],"strength":s,"position_policy":"final_token_only"}|null,
//    "encoding":"json"|"f32le"}
//     -> {"logits":[..],"captured":[{"layer":l,"states":[[..],..]}]}
//   {"op":"embed","text":".."}     -> {"vector":[..]}
//   {"op":"tokenize","text":".."}  -> {"tokens":[..]}
//
// With "encoding":"f32le" every float array (request vector, logits, state
// rows) travels as base64 of little-endian IEEE-754 binary32 values. Failures
// answer {"error":{"code":..,"message":..}} and the session continues. An "id"
// member of a request is echoed in its response.
inline constexpr int kWireProtocolVersion = 1;

// Serves requests from `in` until end of input. `embedder` may be null, in
// which case embed requests fail with code "unsupported". Returns the number
// of requests handled.
std::size_t serve(const LanguageModel & model, const EmbeddingProvider * embedder, std::istream & in,
                  std::ostream & out);

// Handles one request line and returns the response line (without newline).
std::string handle_request(const LanguageModel & model, const EmbeddingProvider * embedder, std::string_view line);

std::string encode_f32le(std::span<const double> values);
Vector decode_f32le(std::string_view base64);

// A model server running as a child process, talking over its stdin/stdout.
// Requests are serialized; the object is safe to share between threads.
class WireClient {
public:
    explicit WireClient(std::vector<std::string> command);
    ~WireClient();
    WireClient(const WireClient &) = delete;
    WireClient & operator=(const WireClient &) = delete;

    // Sends one request line and returns the response line. Throws DataError
    // when the server exits or answers with an error frame.
    std::string request(const std::string & line);

private:
    void close();

    std::mutex mutex_;
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
};

// LanguageModel backed by a model server.
class RemoteModel final : public LanguageModel {
public:
    explicit RemoteModel(std::shared_ptr<WireClient> client, std::string encoding = "json");

    const ModelConfig & config() const override { return config_; }
    ForwardResult forward(const TokenSequence & seq, const std::optional<InterventionSpec> & intervention,
                          std::span<const int> capture_layers) const override;
    std::vector<TokenId> tokenize(std::string_view text) const override;
    TokenId option_token(int score) const override;

    // Embedding dimension advertised by the server, 0 when it cannot embed.
    std::size_t embed_dim() const noexcept { return embed_dim_; }
    const std::shared_ptr<WireClient> & client() const noexcept { return client_; }

private:
    std::shared_ptr<WireClient> client_;
    std::string encoding_;
    ModelConfig config_;
    std::map<int, TokenId> options_;
    std::size_t embed_dim_ = 0;
};

class RemoteEmbedder final : public EmbeddingProvider {
public:
    RemoteEmbedder(std::shared_ptr<WireClient> client, std::size_t dim);

    std::size_t dim() const override { return dim_; }
    Vector embed(std::string_view text) const override;

private:
    std::shared_ptr<WireClient> client_;
    std::size_t dim_;
};

} // namespace steercal
