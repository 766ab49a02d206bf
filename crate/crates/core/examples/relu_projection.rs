//! Projection onto the graph of ReLU, the nonconvex set behind the perceptron
//! experiment.
//!
//! cargo run --example relu_projection

use wmvipd::prox::proj_relu_graph;

fn main() {
    let points = [(2.0, 1.0), (-1.0, 3.0), (-3.0, 1.0), (1.0, -4.0), (0.5, 0.5), (-2.0, -2.0)];
    println!("{:>12} {:>12}   ->  {:>10} {:>10}   dist", "u", "l", "u~", "l~");
    for (u, l) in points {
        let (pu, pl) = proj_relu_graph(u, l);
        let d = ((pu - u).powi(2) + (pl - l).powi(2)).sqrt();
        println!("{u:>12} {l:>12}   ->  {pu:>10.4} {pl:>10.4}   {d:.4}");
    }
}
