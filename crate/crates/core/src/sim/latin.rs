/// `k × k` cyclic Latin square over indices: row `i` is `0..k` rotated left
/// by `i`.
pub fn cyclic_latin_square(k: usize) -> Vec<Vec<usize>> {
    (0..k).map(|i| (0..k).map(|j| (i + j) % k).collect()).collect()
}

/// Orderings for `participants` participants: participant `p` gets row
/// `p mod k` of the cyclic square over `items`.
pub fn latin_order<T: Clone>(items: &[T], participants: usize) -> Vec<Vec<T>> {
    let square = cyclic_latin_square(items.len());
    (0..participants)
        .map(|p| square.get(p % items.len().max(1)).map_or_else(Vec::new, |row| row.iter().map(|&i| items[i].clone()).collect()))
        .collect()
}

/// Every row and every column holds each of `0..k` exactly once.
pub fn is_latin_square(square: &[Vec<usize>]) -> bool {
    let k = square.len();
    let perm = |it: &mut dyn Iterator<Item = usize>| {
        let mut seen = vec![false; k];
        let mut n = 0;
        for x in it {
            if x >= k || std::mem::replace(&mut seen[x], true) {
                return false;
            }
            n += 1;
        }
        n == k
    };
    square.iter().all(|r| r.len() == k && perm(&mut r.iter().copied()))
        && (0..k).all(|c| perm(&mut square.iter().map(|r| r[c])))
}
