use endolab::curves::*;
use endolab::maps::*;
use endolab::torus::*;
fn main() {
    let map = EndoMap::linear(IntMatrix2::diag(3, 2), Torus::unit());
    let torus = map.torus().unwrap();
    let policy = RefinementPolicy::for_map(&map);
    let seg = TorusPolyline::segment(torus, (0.0, 0.3), (0.05, 0.3)).unwrap();
    println!("seed: verts {} len {}", seg.len(), seg.total_length());
    let img = map_curve(&map, &seg, &policy).unwrap();
    println!("image: verts {} diam {:?}", img.len(), diameter(&img));
    for (i, v) in img.vertices().iter().enumerate().take(5) {
        println!("  v{i} = ({}, {})", v.x, v.y);
    }
    let lift = img.lift();
    println!("lift first/last: {:?} {:?}", lift.first(), lift.last());
}
