#include "steercal/wire.hpp"

#include "steercal/error.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <bit>
#include <csignal>
#include <cstring>
#include <sys/wait.h>
#include <unistd.h>

namespace steercal {

using nlohmann::json;

namespace {

struct ProtocolError : Error {
    ProtocolError(std::string code_, const std::string & what) : Error(what), code(std::move(code_)) {}
    std::string code;
};

json float_array(std::span<const double> values, bool binary) {
    if (binary) {
        return encode_f32le(values);
    }
    return json(std::vector<double>(values.begin(), values.end()));
}

Vector read_floats(const json & value) {
    if (value.is_string()) {
        return decode_f32le(value.get<std::string>());
    }
    return value.get<Vector>();
}

json handle(const LanguageModel & model, const EmbeddingProvider * embedder, const json & req) {
    if (!req.is_object() || !req.contains("op") || !req["op"].is_string()) {
        throw ProtocolError("bad_request", "request must be an object with a string \"op\"");
    }
    const std::string op = req["op"].get<std::string>();
    const ModelConfig & config = model.config();

    if (op == "handshake") {
        json options = json::object();
        for (int k = 0; k < kOptionCount; ++k) {
            options[std::to_string(k)] = model.option_token(k);
        }
        return {{"protocol", kWireProtocolVersion},
                {"L", config.num_layers},
                {"d", config.hidden_dim},
                {"V", config.vocab_size},
                {"max_seq_len", config.max_seq_len},
                {"options", options},
                {"encodings", {"json", "f32le"}},
                {"embed_dim", embedder != nullptr ? json(embedder->dim()) : json(nullptr)}};
    }
    if (op == "forward") {
        const bool binary = req.value("encoding", std::string("json")) == "f32le";
        TokenSequence seq;
        seq.tokens = req.at("tokens").get<std::vector<TokenId>>();
        const auto layers = req.value("capture_layers", std::vector<int>{});
        std::optional<InterventionSpec> spec;
        if (auto it = req.find("intervention"); it != req.end() && !it->is_null()) {
            InterventionSpec s;
            s.layer = it->at("layer").get<int>();
            s.vector = read_floats(it->at("vector"));
            s.strength = it->at("strength").get<double>();
            const std::string policy = it->value("position_policy", std::string("final_token_only"));
            if (policy == "all_positions") {
                s.position_policy = PositionPolicy::all_positions;
            } else if (policy != "final_token_only") {
                throw ProtocolError("bad_request", "unknown position_policy \"" + policy + "\"");
            }
            spec = std::move(s);
        }
        const ForwardResult result = forward_with_activations(model, seq, spec, layers);
        json captured = json::array();
        for (const auto & c : result.captured) {
            json rows = json::array();
            for (std::size_t i = 0; i < c.states.rows(); ++i) {
                rows.push_back(float_array(c.states.row(i), binary));
            }
            captured.push_back({{"layer", c.layer}, {"states", rows}});
        }
        return {{"logits", float_array(result.logits, binary)}, {"captured", captured}};
    }
    if (op == "embed") {
        if (embedder == nullptr) {
            throw ProtocolError("unsupported", "this server has no embedding model");
        }
        return {{"vector", embedder->embed(req.at("text").get<std::string>())}};
    }
    if (op == "tokenize") {
        return {{"tokens", model.tokenize(req.at("text").get<std::string>())}};
    }
    throw ProtocolError("unknown_op", "unknown op \"" + op + "\"");
}

json error_frame(const std::string & code, const std::string & message) {
    return {{"error", {{"code", code}, {"message", message}}}};
}

bool write_all(int fd, std::string_view data) {
    while (!data.empty()) {
        const ssize_t n = ::write(fd, data.data(), data.size());
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            return false;
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

} // namespace

std::string handle_request(const LanguageModel & model, const EmbeddingProvider * embedder, std::string_view line) {
    json req;
    try {
        req = json::parse(line);
    } catch (const json::parse_error & e) {
        return error_frame("parse_error", e.what()).dump();
    }
    json resp;
    try {
        resp = handle(model, embedder, req);
    } catch (const ProtocolError & e) {
        resp = error_frame(e.code, e.what());
    } catch (const json::exception & e) {
        resp = error_frame("bad_request", e.what());
    } catch (const InvalidArgument & e) {
        resp = error_frame("invalid_argument", e.what());
    } catch (const std::exception & e) {
        resp = error_frame("internal", e.what());
    }
    if (req.is_object() && req.contains("id")) {
        resp["id"] = req["id"];
    }
    return resp.dump();
}

std::size_t serve(const LanguageModel & model, const EmbeddingProvider * embedder, std::istream & in,
                  std::ostream & out) {
    std::size_t handled = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        out << handle_request(model, embedder, line) << '\n';
        out.flush();
        ++handled;
    }
    return handled;
}

std::string encode_f32le(std::span<const double> values) {
    std::string bytes(values.size() * 4, '\0');
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
        for (int b = 0; b < 4; ++b) {
            bytes[i * 4 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xffu);
        }
    }
    std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char *>(out.data()),
                                  reinterpret_cast<const unsigned char *>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

Vector decode_f32le(std::string_view base64) {
    if (base64.size() % 4 != 0) {
        throw InvalidArgument("f32le: base64 length is not a multiple of 4");
    }
    std::string bytes(base64.size() / 4 * 3 + 1, '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char *>(bytes.data()),
                                  reinterpret_cast<const unsigned char *>(base64.data()), static_cast<int>(base64.size()));
    if (n < 0) {
        throw InvalidArgument("f32le: invalid base64");
    }
    std::size_t length = static_cast<std::size_t>(n);
    for (std::size_t i = base64.size(); i > 0 && base64[i - 1] == '='; --i) {
        --length;
    }
    if (length % 4 != 0) {
        throw InvalidArgument("f32le: payload is not a whole number of float32 values");
    }
    Vector out(length / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) {
            bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + static_cast<std::size_t>(b)]))
                    << (8 * b);
        }
        out[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    return out;
}

WireClient::WireClient(std::vector<std::string> command) {
    if (command.empty()) {
        throw ConfigError("model server command is empty");
    }
    std::signal(SIGPIPE, SIG_IGN);
    int in_pipe[2], out_pipe[2];
    if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0) {
        throw DataError("cannot create pipes for the model server");
    }
    std::vector<char *> argv;
    for (auto & arg : command) {
        argv.push_back(arg.data());
    }
    argv.push_back(nullptr);
    pid_ = ::fork();
    if (pid_ < 0) {
        throw DataError("cannot start model server: fork failed");
    }
    if (pid_ == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        ::execvp(argv[0], argv.data());
        ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
}

WireClient::~WireClient() {
    close();
}

void WireClient::close() {
    if (to_child_ >= 0) {
        ::close(to_child_);
        to_child_ = -1;
    }
    if (from_child_ >= 0) {
        ::close(from_child_);
        from_child_ = -1;
    }
    if (pid_ > 0) {
        int status = 0;
        ::waitpid(pid_, &status, 0);
        pid_ = -1;
    }
}

std::string WireClient::request(const std::string & line) {
    std::lock_guard lock(mutex_);
    if (to_child_ < 0 || !write_all(to_child_, line + "\n")) {
        throw DataError("model server is not accepting requests");
    }
    for (;;) {
        if (const auto pos = buffer_.find('\n'); pos != std::string::npos) {
            std::string response = buffer_.substr(0, pos);
            buffer_.erase(0, pos + 1);
            return response;
        }
        char chunk[65536];
        const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
        if (n < 0 && errno == EINTR) {
            continue;
        }
        if (n <= 0) {
            throw DataError("model server closed the connection");
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

namespace {

json call(WireClient & client, const json & req) {
    json resp;
    try {
        resp = json::parse(client.request(req.dump()));
    } catch (const json::parse_error & e) {
        throw DataError(std::string("model server sent malformed JSON: ") + e.what());
    }
    if (resp.contains("error")) {
        const auto & err = resp["error"];
        const std::string message = err.value("code", std::string("error")) + ": " + err.value("message", std::string());
        if (err.value("code", std::string()) == "invalid_argument") {
            throw InvalidArgument("model server: " + message);
        }
        throw DataError("model server: " + message);
    }
    return resp;
}

} // namespace

RemoteModel::RemoteModel(std::shared_ptr<WireClient> client, std::string encoding)
    : client_(std::move(client)), encoding_(std::move(encoding)) {
    if (encoding_ != "json" && encoding_ != "f32le") {
        throw ConfigError("unknown wire encoding \"" + encoding_ + "\"");
    }
    try {
        const json hs = call(*client_, {{"op", "handshake"}});
        config_.num_layers = hs.at("L").get<int>();
        config_.hidden_dim = hs.at("d").get<int>();
        config_.vocab_size = hs.at("V").get<int>();
        config_.max_seq_len = hs.at("max_seq_len").get<int>();
        config_.num_heads = 1;
        for (int k = 0; k < kOptionCount; ++k) {
            options_[k] = hs.at("options").at(std::to_string(k)).get<TokenId>();
        }
        if (hs.contains("embed_dim") && !hs["embed_dim"].is_null()) {
            embed_dim_ = hs["embed_dim"].get<std::size_t>();
        }
    } catch (const json::exception & e) {
        throw DataError(std::string("model server handshake is malformed: ") + e.what());
    }
    config_.validate();
}

ForwardResult RemoteModel::forward(const TokenSequence & seq, const std::optional<InterventionSpec> & intervention,
                                   std::span<const int> capture_layers) const {
    validate_forward_request(config_, seq, intervention, capture_layers);
    const bool binary = encoding_ == "f32le";
    json req = {{"op", "forward"},
                {"tokens", seq.tokens},
                {"capture_layers", std::vector<int>(capture_layers.begin(), capture_layers.end())},
                {"encoding", encoding_},
                {"intervention", nullptr}};
    if (intervention) {
        req["intervention"] = {
            {"layer", intervention->layer},
            {"vector", float_array(intervention->vector, binary)},
            {"strength", intervention->strength},
            {"position_policy",
             intervention->position_policy == PositionPolicy::all_positions ? "all_positions" : "final_token_only"}};
    }
    const json resp = call(*client_, req);
    try {
        ForwardResult result;
        result.logits = read_floats(resp.at("logits"));
        for (const auto & c : resp.at("captured")) {
            LayerActivations a;
            a.layer = c.at("layer").get<int>();
            a.states = Matrix(0, static_cast<std::size_t>(config_.hidden_dim));
            for (const auto & row : c.at("states")) {
                a.states.append_row(read_floats(row));
            }
            result.captured.push_back(std::move(a));
        }
        if (result.logits.size() != static_cast<std::size_t>(config_.vocab_size)) {
            throw DataError("model server returned " + std::to_string(result.logits.size()) + " logits, expected " +
                            std::to_string(config_.vocab_size));
        }
        return result;
    } catch (const json::exception & e) {
        throw DataError(std::string("model server forward response is malformed: ") + e.what());
    }
}

std::vector<TokenId> RemoteModel::tokenize(std::string_view text) const {
    const json resp = call(*client_, {{"op", "tokenize"}, {"text", std::string(text)}});
    return resp.at("tokens").get<std::vector<TokenId>>();
}

TokenId RemoteModel::option_token(int score) const {
    if (auto it = options_.find(score); it != options_.end()) {
        return it->second;
    }
    throw InvalidArgument("option score " + std::to_string(score) + " outside 0..3");
}

RemoteEmbedder::RemoteEmbedder(std::shared_ptr<WireClient> client, std::size_t dim)
    : client_(std::move(client)), dim_(dim) {
    if (dim_ == 0) {
        throw ConfigError("model server does not provide embeddings");
    }
}

Vector RemoteEmbedder::embed(std::string_view text) const {
    const json resp = call(*client_, {{"op", "embed"}, {"text", std::string(text)}});
    Vector v = read_floats(resp.at("vector"));
    if (v.size() != dim_) {
        throw DataError("model server returned an embedding of " + std::to_string(v.size()) + " dims, expected " +
                        std::to_string(dim_));
    }
    return v;
}

} // namespace steercal
