#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <stdexcept>

#include "qflow/protocol.hpp"

namespace qflow::proto {

namespace {

// ---- in-process duplex pipe ----

struct LineChannel {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::string> lines;
    bool closed = false;

    void push(std::string line) {
        {
            std::lock_guard lock(mu);
            if (closed) return;
            lines.push_back(std::move(line));
        }
        cv.notify_all();
    }

    RecvResult pop(double timeout_s) {
        std::unique_lock lock(mu);
        const auto deadline =
            std::chrono::steady_clock::now() +
            std::chrono::microseconds(static_cast<long>(timeout_s * 1e6));
        while (lines.empty() && !closed) {
            if (cv.wait_until(lock, deadline) == std::cv_status::timeout && lines.empty() && !closed)
                return {RecvResult::Kind::Timeout, {}};
        }
        if (lines.empty()) return {RecvResult::Kind::Eof, {}};
        RecvResult r{RecvResult::Kind::Line, std::move(lines.front())};
        lines.pop_front();
        return r;
    }

    void close() {
        {
            std::lock_guard lock(mu);
            closed = true;
        }
        cv.notify_all();
    }
};

class PipeTransport final : public Transport {
  public:
    PipeTransport(std::shared_ptr<LineChannel> out, std::shared_ptr<LineChannel> in)
        : out_(std::move(out)), in_(std::move(in)) {}
    ~PipeTransport() override { close(); }

    void send_line(const std::string& line) override { out_->push(line); }
    RecvResult recv_line(double timeout_s) override { return in_->pop(timeout_s); }
    void close() override {
        out_->close();
        in_->close();
    }

  private:
    std::shared_ptr<LineChannel> out_, in_;
};

// ---- loopback TCP ----

class TcpTransport final : public Transport {
  public:
    explicit TcpTransport(int fd) : fd_(fd) {}
    ~TcpTransport() override { close(); }

    void send_line(const std::string& line) override {
        std::size_t off = 0;
        while (off < line.size()) {
            const ssize_t n = ::send(fd_, line.data() + off, line.size() - off, MSG_NOSIGNAL);
            if (n <= 0) throw ProtocolError("tcp send failed");
            off += static_cast<std::size_t>(n);
        }
    }

    RecvResult recv_line(double timeout_s) override {
        for (;;) {
            const auto nl = buf_.find('\n');
            if (nl != std::string::npos) {
                RecvResult r{RecvResult::Kind::Line, buf_.substr(0, nl + 1)};
                buf_.erase(0, nl + 1);
                return r;
            }
            pollfd pfd{fd_, POLLIN, 0};
            const int pr = ::poll(&pfd, 1, static_cast<int>(timeout_s * 1000.0));
            if (pr == 0) return {RecvResult::Kind::Timeout, {}};
            if (pr < 0) throw ProtocolError("tcp poll failed");
            char chunk[4096];
            const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
            if (n == 0) return {RecvResult::Kind::Eof, {}};
            if (n < 0) throw ProtocolError("tcp recv failed");
            buf_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    void close() override {
        if (fd_ >= 0) {
            ::shutdown(fd_, SHUT_RDWR);
            ::close(fd_);
            fd_ = -1;
        }
    }

  private:
    int fd_;
    std::string buf_;
};

}  // namespace

std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_pipe_pair() {
    auto a2b = std::make_shared<LineChannel>();
    auto b2a = std::make_shared<LineChannel>();
    return {std::make_unique<PipeTransport>(a2b, b2a), std::make_unique<PipeTransport>(b2a, a2b)};
}

std::unique_ptr<Transport> listen_tcp(int port) {
    const int srv = ::socket(AF_INET, SOCK_STREAM, 0);
    if (srv < 0) throw ProtocolError("tcp socket failed");
    const int one = 1;
    ::setsockopt(srv, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<uint16_t>(port));
    if (::bind(srv, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(srv);
        throw ProtocolError("tcp bind failed");
    }
    if (::listen(srv, 1) != 0) {
        ::close(srv);
        throw ProtocolError("tcp listen failed");
    }
    const int fd = ::accept(srv, nullptr, nullptr);
    ::close(srv);
    if (fd < 0) throw ProtocolError("tcp accept failed");
    return std::make_unique<TcpTransport>(fd);
}

std::unique_ptr<Transport> connect_tcp(const std::string& host, int port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
        throw ProtocolError("tcp bad address: " + host);
    // the server side may still be binding; retry with a fresh socket each
    // time, since a failed connect leaves the fd unusable
    for (int attempt = 0; attempt <= 100; ++attempt) {
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw ProtocolError("tcp socket failed");
        if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0)
            return std::make_unique<TcpTransport>(fd);
        ::close(fd);
        ::usleep(50 * 1000);
    }
    throw ProtocolError("tcp connect failed");
}

}  // namespace qflow::proto
