#pragma once

// Prediction wire protocol, plain byte stream over TCP:
//   request  = 4-byte big-endian payload length | canonical image bytes
//   response = 4-byte big-endian class index
// Requests may be pipelined over a persistent connection; one request per
// connection also works.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cstring>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>

#include "rose/bytes.hpp"
#include "rose/image.hpp"

namespace rose::wire {

using PredictFn = std::function<int(const Image&)>;

namespace detail {

inline bool read_exact(int fd, uint8_t* buf, size_t len) {
    size_t got = 0;
    while (got < len) {
        ssize_t n = ::recv(fd, buf + got, len - got, 0);
        if (n <= 0) return false;
        got += size_t(n);
    }
    return true;
}

inline bool write_exact(int fd, const uint8_t* buf, size_t len) {
    size_t sent = 0;
    while (sent < len) {
        ssize_t n = ::send(fd, buf + sent, len - sent, MSG_NOSIGNAL);
        if (n <= 0) return false;
        sent += size_t(n);
    }
    return true;
}

inline void set_timeout(int fd, int millis) {
    timeval tv{};
    tv.tv_sec = millis / 1000;
    tv.tv_usec = (millis % 1000) * 1000;
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

}  // namespace detail

// Serves a prediction oracle on a loopback/interface port. start() returns
// once the socket is listening; the bound port is then available (useful with
// port 0 for tests).
class PredictionServer {
public:
    explicit PredictionServer(PredictFn oracle) : oracle_(std::move(oracle)) {}

    PredictionServer(const PredictionServer&) = delete;
    PredictionServer& operator=(const PredictionServer&) = delete;

    ~PredictionServer() { stop(); }

    void start(uint16_t port, const std::string& host = "127.0.0.1") {
        if (listen_fd_ >= 0) throw std::logic_error("server already started");
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) throw TransportError("cannot create server socket");
        int one = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
            throw TransportError("bad listen address: " + host);
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
            ::close(listen_fd_);
            listen_fd_ = -1;
            throw TransportError("cannot bind port " + std::to_string(port));
        }
        socklen_t len = sizeof addr;
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
        ::listen(listen_fd_, 8);
        running_ = true;
        worker_ = std::thread([this] { accept_loop(); });
    }

    void stop() {
        if (listen_fd_ < 0) return;
        running_ = false;
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        if (worker_.joinable()) worker_.join();
        listen_fd_ = -1;
    }

    uint16_t port() const { return port_; }
    uint64_t requests_served() const { return served_.load(); }

private:
    void accept_loop() {
        while (running_) {
            int client = ::accept(listen_fd_, nullptr, nullptr);
            if (client < 0) {
                if (!running_) break;
                continue;
            }
            detail::set_timeout(client, 10000);
            serve_connection(client);
            ::close(client);
        }
    }

    void serve_connection(int fd) {
        // answer pipelined requests until the peer closes or misbehaves
        while (running_) {
            uint8_t lenbuf[4];
            if (!detail::read_exact(fd, lenbuf, 4)) return;
            uint32_t len = get_u32be(lenbuf);
            if (len < 16 || len > (64u << 20)) return;  // implausible payload
            Bytes payload(len);
            if (!detail::read_exact(fd, payload.data(), len)) return;
            int cls;
            try {
                Image img = parse_canonical(ByteView(payload.data(), payload.size()));
                cls = oracle_(img);
            } catch (const std::exception&) {
                return;  // malformed image or oracle failure: drop the connection
            }
            Bytes resp;
            put_u32be(resp, uint32_t(cls));
            if (!detail::write_exact(fd, resp.data(), resp.size())) return;
            served_.fetch_add(1);
        }
    }

    PredictFn oracle_;
    int listen_fd_ = -1;
    uint16_t port_ = 0;
    std::atomic<bool> running_{false};
    std::atomic<uint64_t> served_{0};
    std::thread worker_;
};

// Client side. predict() retries a failed query up to 3 attempts (fresh
// connection each retry) and throws TransportError when the endpoint stays
// unreachable.
class PredictionClient {
public:
    PredictionClient(std::string host, uint16_t port, int timeout_ms = 5000)
        : host_(std::move(host)), port_(port), timeout_ms_(timeout_ms) {}

    // "host:port"
    static PredictionClient parse(const std::string& endpoint, int timeout_ms = 5000) {
        auto colon = endpoint.rfind(':');
        if (colon == std::string::npos || colon + 1 >= endpoint.size())
            throw std::invalid_argument("endpoint must be host:port, got " + endpoint);
        int port = std::stoi(endpoint.substr(colon + 1));
        if (port < 1 || port > 65535) throw std::invalid_argument("endpoint port out of range");
        return PredictionClient(endpoint.substr(0, colon), uint16_t(port), timeout_ms);
    }

    ~PredictionClient() { disconnect(); }

    PredictionClient(PredictionClient&& o) noexcept
        : host_(std::move(o.host_)), port_(o.port_), timeout_ms_(o.timeout_ms_), fd_(o.fd_) {
        o.fd_ = -1;
    }
    PredictionClient(const PredictionClient&) = delete;
    PredictionClient& operator=(const PredictionClient&) = delete;

    int predict(const Image& img) {
        Bytes canon = canonical_bytes(img);
        Bytes msg;
        put_u32be(msg, uint32_t(canon.size()));
        msg.insert(msg.end(), canon.begin(), canon.end());

        std::string last_error = "no attempt made";
        for (int attempt = 0; attempt < 3; ++attempt) {
            try {
                if (fd_ < 0) connect();
                if (!detail::write_exact(fd_, msg.data(), msg.size())) {
                    disconnect();
                    last_error = "send failed";
                    continue;
                }
                uint8_t resp[4];
                if (!detail::read_exact(fd_, resp, 4)) {
                    disconnect();
                    last_error = "no response";
                    continue;
                }
                return int(get_u32be(resp));
            } catch (const TransportError& e) {
                last_error = e.what();
                disconnect();
            }
        }
        throw TransportError("prediction query failed after 3 attempts (" + host_ + ":" +
                             std::to_string(port_) + "): " + last_error);
    }

    std::string endpoint() const { return host_ + ":" + std::to_string(port_); }

private:
    void connect() {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0) throw TransportError("cannot create client socket");
        detail::set_timeout(fd_, timeout_ms_);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port_);
        if (::inet_pton(AF_INET, host_.c_str(), &addr.sin_addr) != 1) {
            disconnect();
            throw TransportError("endpoint host must be an IPv4 address: " + host_);
        }
        if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
            disconnect();
            throw TransportError("cannot connect to " + endpoint());
        }
    }

    void disconnect() {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

    std::string host_;
    uint16_t port_;
    int timeout_ms_;
    int fd_ = -1;
};

}  // namespace rose::wire
