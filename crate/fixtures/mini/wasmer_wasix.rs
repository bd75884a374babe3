//! A cut-down WASIX host in the shape of wasmer-wasix: files and sockets
//! behind `dyn VirtualFile` / `dyn VirtualSocket`, libc-level calls for file
//! system access, and WASIX networking and threading interfaces.

use std::ffi::c_char;

extern "C" {
    fn open64(path: *const c_char, flags: i32, ...) -> i32;
    fn unlink(path: *const c_char) -> i32;
    fn read(fd: i32, buf: *mut u8, count: usize) -> isize;
    fn write(fd: i32, buf: *const u8, count: usize) -> isize;
    fn send(fd: i32, buf: *const u8, len: usize, flags: i32) -> isize;
    fn sendto(fd: i32, buf: *const u8, len: usize, flags: i32, addr: *const u8, addrlen: u32) -> isize;
    fn statx(dirfd: i32, path: *const c_char, flags: i32, mask: u32, buf: *mut Statx) -> i32;
    fn pthread_create(
        thread: *mut u64,
        attr: *const u8,
        start: extern "C" fn(*mut u8) -> *mut u8,
        arg: *mut u8,
    ) -> i32;
}

#[repr(C)]
pub struct Statx {
    raw: [u64; 32],
}

const AT_FDCWD: i32 = -100;
const AT_STATX_SYNC_AS_STAT: i32 = 0x0000;
const STATX_BASIC_STATS: u32 = 0x07ff;
const O_WRONLY: i32 = 0o1;
const O_CLOEXEC: i32 = 0o2000000;

static DEV_TTY: [u8; 9] = *b"/dev/tty\0";

pub trait VirtualFile {
    fn read(&mut self, buf: &mut [u8]) -> isize;
    fn write(&mut self, buf: &[u8]) -> isize;
}

pub trait VirtualSocket {
    fn send(&mut self, data: &[u8]) -> isize;
    fn send_to(&mut self, data: &[u8], addr: &[u8]) -> isize;
}

pub struct HostFile {
    fd: i32,
}

impl VirtualFile for HostFile {
    fn read(&mut self, buf: &mut [u8]) -> isize {
        unsafe { read(self.fd, buf.as_mut_ptr(), buf.len()) }
    }
    fn write(&mut self, buf: &[u8]) -> isize {
        unsafe { write(self.fd, buf.as_ptr(), buf.len()) }
    }
}

pub struct LocalUdpSocket {
    fd: i32,
}

impl VirtualSocket for LocalUdpSocket {
    fn send(&mut self, data: &[u8]) -> isize {
        unsafe { send(self.fd, data.as_ptr(), data.len(), 0) }
    }
    fn send_to(&mut self, data: &[u8], addr: &[u8]) -> isize {
        unsafe { sendto(self.fd, data.as_ptr(), data.len(), 0, addr.as_ptr(), addr.len() as u32) }
    }
}

pub struct WasiEnv {
    fds: Vec<Box<dyn VirtualFile>>,
    sockets: Vec<Box<dyn VirtualSocket>>,
}

impl WasiEnv {
    fn file(&mut self, fd: u32) -> Option<&mut (dyn VirtualFile + 'static)> {
        self.fds.get_mut(fd as usize).map(|b| &mut **b)
    }
    fn socket(&mut self, fd: u32) -> Option<&mut (dyn VirtualSocket + 'static)> {
        self.sockets.get_mut(fd as usize).map(|b| &mut **b)
    }
}

mod host_fs {
    /// Path metadata lookup; `flags` selects the synchronisation mode.
    pub fn stat_at(dirfd: i32, path: *const super::c_char, flags: i32, out: &mut super::Statx) -> i32 {
        unsafe { super::statx(dirfd, path, flags, super::STATX_BASIC_STATS, out) }
    }
}

extern "C" fn thread_entry(arg: *mut u8) -> *mut u8 {
    arg
}

pub mod syscalls {
    pub mod wasi {
        use crate::*;

        pub fn fd_read(env: &mut WasiEnv, fd: u32, buf: &mut [u8]) -> isize {
            match env.file(fd) {
                Some(f) => f.read(buf),
                None => -8,
            }
        }

        pub fn fd_write(env: &mut WasiEnv, fd: u32, buf: &[u8]) -> isize {
            match env.file(fd) {
                Some(f) => f.write(buf),
                None => -8,
            }
        }

        pub fn path_open(path: *const c_char, oflags: i32) -> i32 {
            unsafe { open64(path, oflags, 0o644) }
        }

        pub fn path_unlink_file(path: *const c_char) -> i32 {
            unsafe { unlink(path) }
        }

        pub fn path_filestat_get(path: *const c_char, out: &mut Statx) -> i32 {
            host_fs::stat_at(AT_FDCWD, path, AT_STATX_SYNC_AS_STAT, out)
        }
    }

    pub mod wasix {
        use crate::*;

        pub fn sock_send(env: &mut WasiEnv, sock: u32, data: &[u8]) -> isize {
            match env.socket(sock) {
                Some(s) => s.send(data),
                None => -8,
            }
        }

        pub fn sock_send_to(env: &mut WasiEnv, sock: u32, data: &[u8], addr: &[u8]) -> isize {
            match env.socket(sock) {
                Some(s) => s.send_to(data, addr),
                None => -8,
            }
        }

        pub fn tty_set(mode: &[u8]) -> isize {
            let fd = unsafe { open64(&DEV_TTY as *const [u8; 9] as *const c_char, O_WRONLY | O_CLOEXEC) };
            unsafe { write(fd, mode.as_ptr(), mode.len()) }
        }

        pub fn thread_spawn(start_ptr: u64) -> i32 {
            let mut t = 0u64;
            let rc = unsafe { pthread_create(&mut t, core::ptr::null(), thread_entry, start_ptr as usize as *mut u8) };
            if rc == 0 { 1 } else { -rc }
        }
    }
}

/// Drives every interface once; builds the dispatch tables the host uses.
pub fn host_main() -> isize {
    let mut env = WasiEnv {
        fds: vec![Box::new(HostFile { fd: 3 })],
        sockets: vec![Box::new(LocalUdpSocket { fd: 4 })],
    };
    let mut buf = [0u8; 16];
    let mut st = Statx { raw: [0; 32] };
    let p = b"f\0".as_ptr() as *const c_char;
    let mut rc = syscalls::wasi::fd_read(&mut env, 0, &mut buf);
    rc += syscalls::wasi::fd_write(&mut env, 0, &buf);
    rc += syscalls::wasi::path_open(p, 0) as isize;
    rc += syscalls::wasi::path_unlink_file(p) as isize;
    rc += syscalls::wasi::path_filestat_get(p, &mut st) as isize;
    rc += syscalls::wasix::sock_send(&mut env, 0, &buf);
    rc += syscalls::wasix::sock_send_to(&mut env, 0, &buf, &buf);
    rc += syscalls::wasix::tty_set(b"raw");
    rc += syscalls::wasix::thread_spawn(0) as isize;
    rc
}
