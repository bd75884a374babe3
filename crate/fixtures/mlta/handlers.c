/* Indirect calls through struct-typed handler tables, callbacks and an
 * escaped pointer. Built and run once: every call target logs the call site
 * that reached it, which gives the ground truth next to the IR. */
#include <stdio.h>
#include <string.h>

static const char *cur_caller;
static int cur_site;

/* Marks the next indirect call made by `caller` (ordinal among its indirect calls). */
#define SITE(caller, n) (cur_caller = (caller), cur_site = (n))

static void hit(const char *target) {
    printf("%s\t%d\t%s\n", cur_caller, cur_site, target);
}

struct file_ops {
    int (*read)(int fd, char *buf, int len);
    int (*write)(int fd, const char *buf, int len);
};

struct net_ops {
    int (*recv)(int fd, char *buf, int len);
    int (*send)(int fd, const char *buf, int len);
};

static int disk_read(int fd, char *buf, int len) { hit(__func__); memset(buf, 0, len); return fd; }
static int disk_write(int fd, const char *buf, int len) { hit(__func__); return fd + len + buf[0]; }
static int pipe_read(int fd, char *buf, int len) { hit(__func__); return fd - len + buf[0]; }
static int pipe_write(int fd, const char *buf, int len) { hit(__func__); return len + buf[0] - fd; }
static int net_recv(int fd, char *buf, int len) { hit(__func__); return len * fd + buf[0]; }
static int net_send(int fd, const char *buf, int len) { hit(__func__); return len - fd + buf[0]; }

static const struct file_ops disk_ops = { disk_read, disk_write };
static struct file_ops pipe_ops = { pipe_read, pipe_write };
static struct net_ops tcp_ops = { net_recv, net_send };

int file_read(const struct file_ops *ops, int fd, char *buf, int len) {
    SITE(__func__, 0);
    return ops->read(fd, buf, len);
}

int file_copy(const struct file_ops *from, const struct file_ops *to, char *buf, int len) {
    SITE(__func__, 0);
    int n = from->read(3, buf, len);
    SITE(__func__, 1);
    return to->write(4, buf, n);
}

int net_send_all(const struct net_ops *ops, const char *buf, int len) {
    SITE(__func__, 0);
    return ops->send(5, buf, len);
}

static int twice(int x) { hit(__func__); return 2 * x; }
static int square(int x) { hit(__func__); return x * x; }
static int negate(int x) { hit(__func__); return -x; }

int apply(int (*f)(int), int x) {
    SITE(__func__, 0);
    return f(x);
}

struct node {
    int value;
    struct node *left, *right;
};

/* Recursive walk calling a visitor at every node. */
int walk(const struct node *n, int (*visit)(int)) {
    if (!n)
        return 0;
    SITE(__func__, 0);
    int v = visit(n->value);
    return v + walk(n->left, visit) + walk(n->right, visit);
}

/* A handler passed around as an untyped pointer. */
static void *registry_slot;

void register_handler(void *h) { registry_slot = h; }

int call_registered(int x) {
    int (*f)(int) = (int (*)(int))registry_slot;
    SITE(__func__, 0);
    return f(x);
}

int main(void) {
    char buf[8] = "abcdefg";
    struct node leaf = { 3, 0, 0 };
    struct node root = { 1, &leaf, 0 };
    int r = 0;
    r += file_read(&disk_ops, 3, buf, 4);
    r += file_read(&pipe_ops, 3, buf, 4);
    r += file_copy(&disk_ops, &pipe_ops, buf, 4);
    r += net_send_all(&tcp_ops, buf, 4);
    SITE("main", 0);
    r += tcp_ops.recv(6, buf, 4);
    r += apply(twice, 5);
    r += apply(square, 5);
    r += walk(&root, negate);
    register_handler((void *)square);
    r += call_registered(7);
    return r == 12345;
}
