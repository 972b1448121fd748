package i;

/** A callback. */
public interface Callback<T extends Comparable<T>> {
  /** Called on success. */
  void onSuccess(T value);

  /** Default helper. */
  default void onFailure(Throwable t) {
    // ignore by default
  }
}
