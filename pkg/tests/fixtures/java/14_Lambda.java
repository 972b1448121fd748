package l;

class Lambda {
  void run() {
    Runnable r = () -> {
      // inside lambda
    };
    list.forEach(x -> /* inline block */ use(x));
  }
}
