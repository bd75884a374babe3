use std::future::Future;
use std::pin::Pin;
use std::task::{Context, Poll, RawWaker, RawWakerVTable, Waker};

pub trait WasiDir {
    fn open_file<'a>(&'a self, path: &'a str, flags: u32) -> Pin<Box<dyn Future<Output = i32> + 'a>>;
    fn unlink_file(&self, path: &str) -> i32;
}
pub struct Dir(i32);
extern "C" { fn openat(fd: i32, p: *const u8, flags: i32) -> i32; fn unlinkat(fd:i32,p:*const u8,f:i32)->i32; }
impl WasiDir for Dir {
    fn open_file<'a>(&'a self, path: &'a str, flags: u32) -> Pin<Box<dyn Future<Output = i32> + 'a>> {
        Box::pin(async move { unsafe { openat(self.0, path.as_ptr(), flags as i32) } })
    }
    fn unlink_file(&self, path: &str) -> i32 { unsafe { unlinkat(self.0, path.as_ptr(), 0) } }
}
pub struct Table { dirs: Vec<Box<dyn WasiDir>> }
impl Table { fn get_dir(&self, i: usize) -> Option<&dyn WasiDir> { self.dirs.get(i).map(|b| &**b) } }
pub async fn path_open(table: &Table, i: usize, path: &str, flags: u32) -> i32 {
    let d = match table.get_dir(i) { Some(d) => d, None => return -1 };
    d.open_file(path, flags).await
}
fn noop(_: *const ()) {}
fn clone(_: *const ()) -> RawWaker { RawWaker::new(std::ptr::null(), &VT) }
static VT: RawWakerVTable = RawWakerVTable::new(clone, noop, noop, noop);
fn main() {
    let t = Table { dirs: vec![Box::new(Dir(3))] };
    let w = unsafe { Waker::from_raw(RawWaker::new(std::ptr::null(), &VT)) };
    let mut cx = Context::from_waker(&w);
    let mut f = Box::pin(path_open(&t, 0, "x\0", 0));
    let _ = f.as_mut().poll(&mut cx);
}
