fn main() {
    println!("cubic-delta CLI placeholder");
}
