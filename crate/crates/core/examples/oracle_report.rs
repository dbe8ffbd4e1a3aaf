fn main() {
    let t = std::time::Instant::now();
    let report = sian::oracle::run_all(0).expect("oracle suite");
    println!("{}", report.to_json().unwrap());
    eprintln!("{:?}", t.elapsed());
}
