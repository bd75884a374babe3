//! A cut-down WASI preview-1 host in the shape of wasmtime-wasi: host
//! functions reach the OS through `dyn WasiFile` / `dyn WasiDir` objects
//! stored in a table, async directory operations, raw syscalls for path
//! operations (as rustix issues them) and a thread-spawn interface.

use std::future::Future;
use std::pin::Pin;
use std::task::{Context, Poll, RawWaker, RawWakerVTable, Waker};

#[repr(C)]
pub struct IoVec {
    base: *mut u8,
    len: usize,
}

extern "C" {
    fn syscall(number: i64, ...) -> i64;
    fn fsync(fd: i32) -> i32;
    fn fdatasync(fd: i32) -> i32;
    fn readv(fd: i32, iov: *const IoVec, iovcnt: i32) -> isize;
    fn writev(fd: i32, iov: *const IoVec, iovcnt: i32) -> isize;
    fn preadv(fd: i32, iov: *const IoVec, iovcnt: i32, offset: i64) -> isize;
    fn pwrite64(fd: i32, buf: *const u8, count: usize, offset: i64) -> isize;
    fn pthread_create(
        thread: *mut u64,
        attr: *const u8,
        start: extern "C" fn(*mut u8) -> *mut u8,
        arg: *mut u8,
    ) -> i32;
}

const SYS_OPENAT: i64 = 257;

mod rustix {
    /// Three-argument raw syscall.
    #[inline(never)]
    pub unsafe fn syscall3(nr: usize, a0: usize, a1: usize, a2: usize) -> isize {
        let ret: isize;
        core::arch::asm!(
            "syscall",
            inlateout("rax") nr as isize => ret,
            in("rdi") a0,
            in("rsi") a1,
            in("rdx") a2,
            lateout("rcx") _,
            lateout("r11") _,
            options(nostack),
        );
        ret
    }

    pub fn unlinkat(dirfd: i32, path: *const u8, flags: i32) -> isize {
        unsafe { syscall3(263, dirfd as usize, path as usize, flags as usize) }
    }
}

pub trait WasiFile {
    fn sync(&self) -> i32;
    fn datasync(&self) -> i32;
    fn read_vectored(&self, bufs: &[IoVec]) -> isize;
    fn write_vectored(&self, bufs: &[IoVec]) -> isize;
    fn read_vectored_at(&self, bufs: &[IoVec], offset: u64) -> isize;
    fn write_at(&self, buf: &[u8], offset: u64) -> isize;
}

pub trait WasiDir {
    fn open_file<'a>(&'a self, path: &'a [u8], oflags: u32) -> Pin<Box<dyn Future<Output = i32> + 'a>>;
    fn unlink_file(&self, path: &[u8]) -> isize;
}

pub struct File(i32);

impl WasiFile for File {
    fn sync(&self) -> i32 {
        unsafe { fsync(self.0) }
    }
    fn datasync(&self) -> i32 {
        unsafe { fdatasync(self.0) }
    }
    fn read_vectored(&self, bufs: &[IoVec]) -> isize {
        unsafe { readv(self.0, bufs.as_ptr(), bufs.len() as i32) }
    }
    fn write_vectored(&self, bufs: &[IoVec]) -> isize {
        unsafe { writev(self.0, bufs.as_ptr(), bufs.len() as i32) }
    }
    fn read_vectored_at(&self, bufs: &[IoVec], offset: u64) -> isize {
        unsafe { preadv(self.0, bufs.as_ptr(), bufs.len() as i32, offset as i64) }
    }
    fn write_at(&self, buf: &[u8], offset: u64) -> isize {
        unsafe { pwrite64(self.0, buf.as_ptr(), buf.len(), offset as i64) }
    }
}

pub struct Dir(i32);

impl WasiDir for Dir {
    fn open_file<'a>(&'a self, path: &'a [u8], oflags: u32) -> Pin<Box<dyn Future<Output = i32> + 'a>> {
        Box::pin(async move { unsafe { syscall(SYS_OPENAT, self.0, path.as_ptr(), oflags as i32, 0o644) as i32 } })
    }
    fn unlink_file(&self, path: &[u8]) -> isize {
        rustix::unlinkat(self.0, path.as_ptr(), 0)
    }
}

pub struct WasiCtx {
    files: Vec<Box<dyn WasiFile>>,
    dirs: Vec<Box<dyn WasiDir>>,
}

impl WasiCtx {
    fn file(&self, fd: u32) -> Option<&dyn WasiFile> {
        self.files.get(fd as usize).map(|b| &**b)
    }
    fn dir(&self, fd: u32) -> Option<&dyn WasiDir> {
        self.dirs.get(fd as usize).map(|b| &**b)
    }
}

pub mod snapshots {
    pub mod preview_1 {
        use crate::{IoVec, WasiCtx};

        pub async fn path_open(ctx: &WasiCtx, dirfd: u32, path: &[u8], oflags: u32) -> i32 {
            let d = match ctx.dir(dirfd) {
                Some(d) => d,
                None => return -8,
            };
            d.open_file(path, oflags).await
        }

        pub fn path_unlink_file(ctx: &WasiCtx, dirfd: u32, path: &[u8]) -> isize {
            match ctx.dir(dirfd) {
                Some(d) => d.unlink_file(path),
                None => -8,
            }
        }

        pub fn fd_sync(ctx: &WasiCtx, fd: u32) -> i32 {
            ctx.file(fd).map_or(-8, |f| f.sync())
        }

        pub fn fd_datasync(ctx: &WasiCtx, fd: u32) -> i32 {
            ctx.file(fd).map_or(-8, |f| f.datasync())
        }

        pub fn fd_read(ctx: &WasiCtx, fd: u32, iovs: &[IoVec]) -> isize {
            match ctx.file(fd) {
                Some(f) => f.read_vectored(iovs),
                None => -8,
            }
        }

        pub fn fd_write(ctx: &WasiCtx, fd: u32, iovs: &[IoVec]) -> isize {
            match ctx.file(fd) {
                Some(f) => f.write_vectored(iovs),
                None => -8,
            }
        }

        pub fn fd_pread(ctx: &WasiCtx, fd: u32, iovs: &[IoVec], offset: u64) -> isize {
            match ctx.file(fd) {
                Some(f) => f.read_vectored_at(iovs, offset),
                None => -8,
            }
        }

        pub fn fd_pwrite(ctx: &WasiCtx, fd: u32, buf: &[u8], offset: u64) -> isize {
            match ctx.file(fd) {
                Some(f) => f.write_at(buf, offset),
                None => -8,
            }
        }
    }
}

extern "C" fn thread_start(arg: *mut u8) -> *mut u8 {
    arg
}

pub mod wasi_threads {
    pub fn thread_spawn(start_arg: i32) -> i32 {
        let mut t = 0u64;
        let rc = unsafe { crate::pthread_create(&mut t, core::ptr::null(), crate::thread_start, start_arg as usize as *mut u8) };
        if rc == 0 { 1 } else { -rc }
    }
}

fn noop(_: *const ()) {}
fn clone(_: *const ()) -> RawWaker {
    RawWaker::new(core::ptr::null(), &VT)
}
static VT: RawWakerVTable = RawWakerVTable::new(clone, noop, noop, noop);

/// Drives every interface once; builds the dispatch tables the host uses.
pub fn host_main() -> i32 {
    let ctx = WasiCtx { files: vec![Box::new(File(3))], dirs: vec![Box::new(Dir(4))] };
    let waker = unsafe { Waker::from_raw(RawWaker::new(core::ptr::null(), &VT)) };
    let mut cx = Context::from_waker(&waker);
    let mut open = Box::pin(snapshots::preview_1::path_open(&ctx, 0, b"f\0", 0));
    let opened = match open.as_mut().poll(&mut cx) {
        Poll::Ready(fd) => fd,
        Poll::Pending => -1,
    };
    let iov = [IoVec { base: core::ptr::null_mut(), len: 0 }];
    let mut rc = opened as isize;
    rc += snapshots::preview_1::path_unlink_file(&ctx, 0, b"f\0");
    rc += snapshots::preview_1::fd_sync(&ctx, 0) as isize;
    rc += snapshots::preview_1::fd_datasync(&ctx, 0) as isize;
    rc += snapshots::preview_1::fd_read(&ctx, 0, &iov);
    rc += snapshots::preview_1::fd_write(&ctx, 0, &iov);
    rc += snapshots::preview_1::fd_pread(&ctx, 0, &iov, 0);
    rc += snapshots::preview_1::fd_pwrite(&ctx, 0, b"x", 0);
    rc += wasi_threads::thread_spawn(0) as isize;
    rc as i32
}
