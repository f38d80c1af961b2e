mod par {
    use pgrl_core::par::*;

    #[test]
    fn modes_agree() {
        let mut a: Vec<u64> = (0..100).collect();
        let mut b = a.clone();
        let fa = map_mut(&mut a, true, |i, x| {
            *x += 1;
            *x * i as u64
        });
        let fb = map_mut(&mut b, false, |i, x| {
            *x += 1;
            *x * i as u64
        });
        assert_eq!(fa, fb);
        assert_eq!(a, b);
        assert_eq!(map_range(10, true, |i| i * i), map_range(10, false, |i| i * i));
    }
}
